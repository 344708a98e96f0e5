#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "forge/document.hpp"

namespace forge::docextract {

struct ExtractionRules {
    // Element names whose whole subtree is dropped (script/style always are).
    std::set<std::string> strip_tags{"script", "style", "nav", "header", "footer", "aside", "form"};
    // Case-insensitive substrings matched against id and class attribute values.
    std::set<std::string> strip_ids_or_classes{"nav", "menu", "sidebar", "footer", "banner", "cookie", "advert"};
    // Lines containing any of these phrases (case-insensitive) are removed.
    std::set<std::string> strip_keywords;
    std::size_t min_doc_tokens = 64;

    static ExtractionRules from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

ExtractionRules load_rules(const std::filesystem::path& path);

// Main text of an HTML page: boilerplate subtrees removed, entities decoded,
// blocks separated by one blank line. Input without markup is normalized
// paragraph-wise, so the function is idempotent on its own output.
std::string extract_main_content(std::string_view html, const ExtractionRules& rules);

// Decodes named and numeric character references.
std::string decode_entities(std::string_view s);

// Drops keyword lines, collapses whitespace; Drop(too_short) under min_doc_tokens.
Document clean_document(std::string_view text, const ExtractionRules& rules, Origin origin,
                        std::string path_or_url);

}  // namespace forge::docextract
