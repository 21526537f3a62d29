#ifndef ECR_UTF8_HPP_
#define ECR_UTF8_HPP_

#include <string>
#include <string_view>
#include <vector>

namespace ecr::utf8 {

// Invalid byte sequences decode to U+FFFD.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);

// Simple case folding for ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic.
char32_t to_lower(char32_t c);
std::string to_lower(std::string_view text);

// Trailing n code points (the whole string when shorter).
std::string suffix(std::string_view text, std::size_t n);
// Leading n code points.
std::string prefix(std::string_view text, std::size_t n);

std::size_t length(std::string_view text);

// Splits on a single separator character; keeps empty fields.
std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

}  // namespace ecr::utf8

#endif  // ECR_UTF8_HPP_
