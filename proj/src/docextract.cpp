#include "forge/docextract.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "forge/errors.hpp"
#include "forge/text.hpp"

namespace forge::docextract {

namespace {

const std::unordered_set<std::string> kAlwaysStripped{"script", "style", "noscript", "template", "head", "svg"};

const std::unordered_set<std::string> kVoidElements{"area", "base", "br",    "col",   "embed", "hr",  "img",
                                                    "input", "link", "meta", "param", "source", "track", "wbr"};

const std::unordered_set<std::string> kBlockElements{
    "address", "article", "blockquote", "body", "br", "dd", "div", "dl", "dt", "figcaption", "figure",
    "h1", "h2", "h3", "h4", "h5", "h6", "hr", "html", "li", "main", "ol", "p", "pre", "section",
    "table", "tbody", "td", "th", "thead", "title", "tr", "ul", "caption", "nav", "header", "footer",
    "aside", "form"};

// Elements that implicitly close an open element of the same name.
const std::unordered_set<std::string> kSelfNesting{"p", "li", "dt", "dd", "tr", "td", "th", "option"};

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

const std::unordered_map<std::string_view, std::uint32_t>& named_entities() {
    static const std::unordered_map<std::string_view, std::uint32_t> table{
        {"amp", '&'},     {"lt", '<'},        {"gt", '>'},       {"quot", '"'},     {"apos", '\''},
        {"nbsp", 0xA0},   {"copy", 0xA9},     {"reg", 0xAE},     {"trade", 0x2122}, {"mdash", 0x2014},
        {"ndash", 0x2013}, {"hellip", 0x2026}, {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C},
        {"rdquo", 0x201D}, {"laquo", 0xAB},    {"raquo", 0xBB},   {"middot", 0xB7},  {"bull", 0x2022},
        {"sect", 0xA7},   {"para", 0xB6},     {"deg", 0xB0},     {"times", 0xD7},   {"euro", 0x20AC}};
    return table;
}

bool contains_ci(std::string_view hay, std::string_view needle) {
    if (needle.empty()) return false;
    return text::to_lower_ascii(hay).find(text::to_lower_ascii(needle)) != std::string::npos;
}

bool has_markup(std::string_view s) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] != '<') continue;
        char c = s[i + 1];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '/' || c == '!') return true;
    }
    return false;
}

// Paragraphs are separated by blank lines; whitespace inside each collapses.
std::string normalize_paragraphs(std::string_view s) {
    std::vector<std::string> paragraphs;
    std::string cur;
    std::istringstream in{std::string(s)};
    std::string line;
    auto flush = [&] {
        auto p = text::collapse_whitespace(cur);
        if (!p.empty()) paragraphs.push_back(std::move(p));
        cur.clear();
    };
    while (std::getline(in, line)) {
        if (text::split_whitespace(line).empty()) {
            flush();
        } else {
            cur += line;
            cur += ' ';
        }
    }
    flush();
    return text::join(paragraphs, "\n\n");
}

struct Tag {
    std::string name;
    bool closing = false;
    bool self_closing = false;
    std::string id;
    std::string cls;
};

// Parses the tag starting at html[pos] == '<'; returns the index past '>'.
std::size_t parse_tag(std::string_view html, std::size_t pos, Tag& tag) {
    std::size_t i = pos + 1;
    if (i < html.size() && html[i] == '/') {
        tag.closing = true;
        ++i;
    }
    std::size_t name_start = i;
    while (i < html.size() && (std::isalnum(static_cast<unsigned char>(html[i])) || html[i] == '-' || html[i] == ':')) ++i;
    tag.name = text::to_lower_ascii(html.substr(name_start, i - name_start));
    while (i < html.size() && html[i] != '>') {
        if (std::isspace(static_cast<unsigned char>(html[i]))) {
            ++i;
            continue;
        }
        if (html[i] == '/') {
            tag.self_closing = true;
            ++i;
            continue;
        }
        std::size_t an = i;
        while (i < html.size() && html[i] != '=' && html[i] != '>' && html[i] != '/' &&
               !std::isspace(static_cast<unsigned char>(html[i])))
            ++i;
        std::string attr = text::to_lower_ascii(html.substr(an, i - an));
        if (an == i) {
            ++i;
            continue;
        }
        tag.self_closing = false;
        while (i < html.size() && std::isspace(static_cast<unsigned char>(html[i]))) ++i;
        std::string value;
        if (i < html.size() && html[i] == '=') {
            ++i;
            while (i < html.size() && std::isspace(static_cast<unsigned char>(html[i]))) ++i;
            if (i < html.size() && (html[i] == '"' || html[i] == '\'')) {
                char q = html[i++];
                std::size_t vs = i;
                while (i < html.size() && html[i] != q) ++i;
                value = std::string(html.substr(vs, i - vs));
                if (i < html.size()) ++i;
            } else {
                std::size_t vs = i;
                while (i < html.size() && html[i] != '>' && !std::isspace(static_cast<unsigned char>(html[i]))) ++i;
                value = std::string(html.substr(vs, i - vs));
            }
        }
        if (attr == "id") tag.id = value;
        if (attr == "class") tag.cls = value;
    }
    return i < html.size() ? i + 1 : html.size();
}

struct OpenElement {
    std::string name;
    bool stripped;
};

class Extractor {
public:
    explicit Extractor(const ExtractionRules& rules) : rules_(rules) {}

    std::string run(std::string_view html) {
        std::size_t i = 0;
        while (i < html.size()) {
            if (html[i] == '<') {
                std::size_t next = handle_markup(html, i);
                if (next != i) {
                    i = next;
                    continue;
                }
            }
            std::size_t lt = html.find('<', i + 1);
            if (lt == std::string_view::npos) lt = html.size();
            if (!stripped()) raw_text_.append(html.substr(i, lt - i));
            i = lt;
        }
        break_block();
        return text::join(blocks_, "\n\n");
    }

private:
    bool stripped() const { return !stack_.empty() && stack_.back().stripped; }

    void break_block() {
        if (raw_text_.empty()) return;
        auto block = text::collapse_whitespace(decode_entities(raw_text_));
        raw_text_.clear();
        if (!block.empty()) blocks_.push_back(std::move(block));
    }

    bool strip_element(const Tag& tag) const {
        if (kAlwaysStripped.count(tag.name) || rules_.strip_tags.count(tag.name)) return true;
        for (const auto& needle : rules_.strip_ids_or_classes) {
            if (contains_ci(tag.id, needle) || contains_ci(tag.cls, needle)) return true;
        }
        return false;
    }

    // Returns pos unchanged when the '<' does not start markup (literal text).
    std::size_t handle_markup(std::string_view html, std::size_t pos) {
        if (html.substr(pos, 4) == "<!--") {
            auto end = html.find("-->", pos + 4);
            return end == std::string_view::npos ? html.size() : end + 3;
        }
        if (pos + 1 >= html.size()) return pos;
        char c = html[pos + 1];
        if (c == '!' || c == '?') {
            auto end = html.find('>', pos);
            return end == std::string_view::npos ? html.size() : end + 1;
        }
        if (!(std::isalpha(static_cast<unsigned char>(c)) || c == '/')) return pos;

        Tag tag;
        std::size_t next = parse_tag(html, pos, tag);
        if (tag.name.empty()) return next;
        if (kBlockElements.count(tag.name) && !stripped()) break_block();

        if (tag.closing) {
            close(tag.name);
            return next;
        }
        if (kVoidElements.count(tag.name) || tag.self_closing) return next;

        if (kSelfNesting.count(tag.name) && !stack_.empty() && stack_.back().name == tag.name) stack_.pop_back();
        bool strip = stripped() || strip_element(tag);
        if (tag.name == "script" || tag.name == "style") {
            // Raw text content: skip straight to the matching end tag.
            std::string end_tag = "</" + tag.name;
            std::string lower = text::to_lower_ascii(html.substr(next));
            auto end = lower.find(end_tag);
            if (end == std::string::npos) return html.size();
            auto gt = html.find('>', next + end);
            return gt == std::string_view::npos ? html.size() : gt + 1;
        }
        stack_.push_back({tag.name, strip});
        return next;
    }

    void close(const std::string& name) {
        for (std::size_t k = stack_.size(); k-- > 0;) {
            if (stack_[k].name == name) {
                stack_.resize(k);
                return;
            }
        }
        // Stray end tag: ignored.
    }

    const ExtractionRules& rules_;
    std::vector<OpenElement> stack_;
    std::vector<std::string> blocks_;
    std::string raw_text_;
};

std::string strip_all_tags(std::string_view html) {
    std::string out;
    bool in_tag = false;
    for (char c : html) {
        if (c == '<') in_tag = true;
        else if (c == '>') in_tag = false, out.push_back(' ');
        else if (!in_tag) out.push_back(c);
    }
    return normalize_paragraphs(decode_entities(out));
}

std::set<std::string> string_set(const nlohmann::json& j, const char* key, std::set<std::string> fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<std::set<std::string>>();
}

}  // namespace

std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            continue;
        }
        auto semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out.push_back('&');
            continue;
        }
        auto body = s.substr(i + 1, semi - i - 1);
        if (!body.empty() && body[0] == '#') {
            std::uint32_t cp = 0;
            bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
            auto digits = body.substr(hex ? 2 : 1);
            bool ok = !digits.empty();
            for (char d : digits) {
                int v = std::isdigit(static_cast<unsigned char>(d)) ? d - '0'
                        : hex && std::isxdigit(static_cast<unsigned char>(d))
                            ? (std::tolower(static_cast<unsigned char>(d)) - 'a' + 10)
                            : -1;
                if (v < 0) {
                    ok = false;
                    break;
                }
                cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
                if (cp > 0x10FFFF) cp = 0x110000;
            }
            if (ok) {
                append_utf8(out, cp);
                i = semi;
                continue;
            }
        } else if (auto it = named_entities().find(body); it != named_entities().end()) {
            append_utf8(out, it->second);
            i = semi;
            continue;
        }
        out.push_back('&');
    }
    return out;
}

ExtractionRules ExtractionRules::from_json(const nlohmann::json& j) {
    ExtractionRules r;
    r.strip_tags = string_set(j, "strip_tags", r.strip_tags);
    r.strip_ids_or_classes = string_set(j, "strip_ids_or_classes", r.strip_ids_or_classes);
    r.strip_keywords = string_set(j, "strip_keywords", r.strip_keywords);
    if (j.contains("min_doc_tokens")) {
        auto v = j.at("min_doc_tokens").get<long long>();
        if (v < 0) throw ValidationError("min_doc_tokens must be >= 0");
        r.min_doc_tokens = static_cast<std::size_t>(v);
    }
    for (auto& t : r.strip_tags) {
        if (t != text::to_lower_ascii(t)) throw ValidationError("strip_tags must be lowercase: " + t);
    }
    return r;
}

nlohmann::json ExtractionRules::to_json() const {
    return {{"strip_tags", strip_tags},
            {"strip_ids_or_classes", strip_ids_or_classes},
            {"strip_keywords", strip_keywords},
            {"min_doc_tokens", min_doc_tokens}};
}

ExtractionRules load_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rules file " + path.string());
    try {
        return ExtractionRules::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("rules file " + path.string() + ": " + e.what());
    }
}

std::string extract_main_content(std::string_view html, const ExtractionRules& rules) {
    if (!has_markup(html)) return normalize_paragraphs(decode_entities(html));
    try {
        return Extractor(rules).run(html);
    } catch (const std::exception&) {
        return strip_all_tags(html);
    }
}

Document clean_document(std::string_view text, const ExtractionRules& rules, Origin origin,
                        std::string path_or_url) {
    std::vector<std::string> lines;
    std::istringstream in{std::string(text)};
    std::string line;
    bool pending_blank = false;
    while (std::getline(in, line)) {
        bool drop = std::any_of(rules.strip_keywords.begin(), rules.strip_keywords.end(),
                                [&](const std::string& k) { return contains_ci(line, k); });
        if (drop) continue;
        auto collapsed = text::collapse_whitespace(line);
        if (collapsed.empty()) {
            pending_blank = !lines.empty();
            continue;
        }
        if (pending_blank) lines.emplace_back();
        pending_blank = false;
        lines.push_back(std::move(collapsed));
    }
    std::string cleaned = text::join(lines, "\n");
    if (!cleaned.empty()) cleaned.push_back('\n');
    Document doc = make_document(origin, std::move(path_or_url), std::move(cleaned), DocKind::mainframe_doc);
    if (doc.approx_tokens < rules.min_doc_tokens || doc.content.empty()) doc.filter_status = DropReason::too_short;
    return doc;
}

}  // namespace forge::docextract
