#include "forge/document.hpp"

#include "forge/errors.hpp"
#include "forge/hashing.hpp"
#include "forge/text.hpp"

namespace forge {

std::string_view to_string(Origin o) noexcept {
    switch (o) {
        case Origin::repo_file: return "repo_file";
        case Origin::web_page: return "web_page";
        case Origin::book: return "book";
    }
    return "repo_file";
}

std::string_view to_string(DocKind k) noexcept {
    switch (k) {
        case DocKind::cobol: return "cobol";
        case DocKind::mainframe_doc: return "mainframe_doc";
        case DocKind::excluded: return "excluded";
    }
    return "excluded";
}

std::string_view to_string(DropReason r) noexcept {
    switch (r) {
        case DropReason::too_short: return "too_short";
        case DropReason::too_long: return "too_long";
        case DropReason::low_alnum_fraction: return "low_alnum_fraction";
        case DropReason::binary: return "binary";
        case DropReason::excluded_kind: return "excluded_kind";
    }
    return "too_short";
}

Origin parse_origin(std::string_view s) {
    if (s == "repo_file") return Origin::repo_file;
    if (s == "web_page") return Origin::web_page;
    if (s == "book") return Origin::book;
    throw ValidationError("unknown origin '" + std::string(s) + "'");
}

DocKind parse_doc_kind(std::string_view s) {
    if (s == "cobol") return DocKind::cobol;
    if (s == "mainframe_doc") return DocKind::mainframe_doc;
    if (s == "excluded") return DocKind::excluded;
    throw ValidationError("unknown document kind '" + std::string(s) + "'");
}

DropReason parse_drop_reason(std::string_view s) {
    for (auto r : {DropReason::too_short, DropReason::too_long, DropReason::low_alnum_fraction,
                   DropReason::binary, DropReason::excluded_kind}) {
        if (to_string(r) == s) return r;
    }
    throw ValidationError("unknown drop reason '" + std::string(s) + "'");
}

std::size_t approx_token_count(std::string_view content) { return text::code_tokens(content).size(); }

Document make_document(Origin origin, std::string path, std::string content, DocKind kind,
                       const TokenCounter& count_tokens) {
    Document d;
    d.id = sha256_hex(content);
    d.origin = origin;
    d.path_or_url = std::move(path);
    d.kind = kind;
    d.loc = text::count_lines(content);
    d.approx_tokens = count_tokens(content);
    d.content = std::move(content);
    return d;
}

}  // namespace forge
