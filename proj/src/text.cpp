#include "forge/text.hpp"

#include <cctype>

namespace forge::text {

namespace {

bool is_ascii_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

bool is_ascii_alnum(unsigned char c) { return c < 0x80 && std::isalnum(c); }

}  // namespace

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::size_t whitespace_len(std::string_view s, std::size_t pos) noexcept {
    auto byte = [&](std::size_t i) -> unsigned char {
        return i < s.size() ? static_cast<unsigned char>(s[i]) : 0;
    };
    unsigned char c = byte(pos);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return 1;
    if (c == 0xC2 && byte(pos + 1) == 0xA0) return 2;                        // U+00A0
    if (c == 0xE1 && byte(pos + 1) == 0x9A && byte(pos + 2) == 0x80) return 3;  // U+1680
    if (c == 0xE2 && byte(pos + 1) == 0x80) {
        unsigned char t = byte(pos + 2);
        if ((t >= 0x80 && t <= 0x8A) || t == 0xA8 || t == 0xA9 || t == 0xAF) return 3;
    }
    if (c == 0xE2 && byte(pos + 1) == 0x81 && byte(pos + 2) == 0x9F) return 3;  // U+205F
    if (c == 0xE3 && byte(pos + 1) == 0x80 && byte(pos + 2) == 0x80) return 3;  // U+3000
    return 0;
}

std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < s.size();) {
        if (std::size_t w = whitespace_len(s, i)) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
            i += w;
        } else {
            cur.push_back(s[i++]);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string collapse_whitespace(std::string_view s) { return join(split_whitespace(s), " "); }

std::string trim(std::string_view s) {
    std::size_t b = 0;
    while (b < s.size() && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    std::size_t e = s.size();
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> code_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    };
    for (std::size_t i = 0; i < s.size();) {
        if (std::size_t w = whitespace_len(s, i)) {
            flush();
            i += w;
            continue;
        }
        auto c = static_cast<unsigned char>(s[i]);
        if (is_ascii_alnum(c) || c == '_' || c == '-' || c >= 0x80) {
            cur.push_back(static_cast<char>(c));
        } else {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        }
        ++i;
    }
    flush();
    return out;
}

std::vector<std::string> metric_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    };
    for (std::size_t i = 0; i < s.size();) {
        if (std::size_t w = whitespace_len(s, i)) {
            flush();
            i += w;
            continue;
        }
        auto c = static_cast<unsigned char>(s[i]);
        if (is_ascii_punct(c)) {
            flush();
            out.emplace_back(1, static_cast<char>(c));
        } else if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if (c >= 0x20) {
            cur.push_back(static_cast<char>(c));
        }
        ++i;
    }
    flush();
    return out;
}

std::size_t count_lines(std::string_view s) noexcept {
    if (s.empty()) return 0;
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    if (s.back() != '\n') ++n;
    return n;
}

double alnum_fraction(std::string_view s) noexcept {
    if (s.empty()) return 0.0;
    std::size_t n = 0;
    for (unsigned char c : s) n += is_ascii_alnum(c);
    return static_cast<double>(n) / static_cast<double>(s.size());
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

bool contains_nul(std::string_view s) noexcept { return s.find('\0') != std::string_view::npos; }

}  // namespace forge::text
