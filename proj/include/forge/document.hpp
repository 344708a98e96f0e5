#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace forge {

enum class Origin { repo_file, web_page, book };
enum class DocKind { cobol, mainframe_doc, excluded };
enum class DropReason { too_short, too_long, low_alnum_fraction, binary, excluded_kind };

std::string_view to_string(Origin o) noexcept;
std::string_view to_string(DocKind k) noexcept;
std::string_view to_string(DropReason r) noexcept;
Origin parse_origin(std::string_view s);
DocKind parse_doc_kind(std::string_view s);
DropReason parse_drop_reason(std::string_view s);

// nullopt means keep.
using FilterVerdict = std::optional<DropReason>;

struct Document {
    std::string id;  // sha256 of the content bytes
    Origin origin = Origin::repo_file;
    std::string path_or_url;
    DocKind kind = DocKind::excluded;
    std::string content;
    std::size_t loc = 0;
    std::size_t approx_tokens = 0;
    FilterVerdict filter_status;

    bool kept() const noexcept { return !filter_status.has_value(); }
};

// Pluggable token counter used for approx_tokens.
using TokenCounter = std::function<std::size_t(std::string_view)>;

// Default approximate token count (see text::code_tokens).
std::size_t approx_token_count(std::string_view content);

// Fills id, loc and approx_tokens from the content; kind and status untouched.
Document make_document(Origin origin, std::string path, std::string content, DocKind kind,
                       const TokenCounter& count_tokens = approx_token_count);

}  // namespace forge
