#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace forge::text {

std::string to_lower_ascii(std::string_view s);

// Length in bytes of the whitespace code point starting at s[pos] (ASCII or
// one of the Unicode space separators encoded as UTF-8), 0 when none.
std::size_t whitespace_len(std::string_view s, std::size_t pos) noexcept;

std::vector<std::string> split_whitespace(std::string_view s);

// Trims and collapses every whitespace run to a single ASCII space.
std::string collapse_whitespace(std::string_view s);

std::string trim(std::string_view s);

// Approximate corpus tokenizer: word runs (alnum, '_', '-', non-ASCII bytes)
// and single punctuation characters. Token totals built on it are approximate.
std::vector<std::string> code_tokens(std::string_view s);

// Tokenizer shared by every evaluation metric: lowercase, split on whitespace,
// each ASCII punctuation character becomes its own token.
std::vector<std::string> metric_tokens(std::string_view s);

// Number of newline-delimited lines; a trailing newline does not open a line.
std::size_t count_lines(std::string_view s) noexcept;

// Fraction of bytes that are ASCII alphanumeric; 0 for empty input.
double alnum_fraction(std::string_view s) noexcept;

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool contains_nul(std::string_view s) noexcept;

}  // namespace forge::text
