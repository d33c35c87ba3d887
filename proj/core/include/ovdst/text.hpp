#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ovdst::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Collapse every run of whitespace into a single space and trim the ends.
std::string collapse_whitespace(std::string_view s);

// Strip ASCII punctuation from both ends (internal punctuation is kept).
std::string strip_punctuation(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);
bool iequals(std::string_view a, std::string_view b);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Levenshtein distance over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

// 1 - edit_distance / max(len); two empty strings are identical (1.0).
double edit_similarity(std::string_view a, std::string_view b);

} // namespace ovdst::text
