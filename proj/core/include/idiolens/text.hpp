#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace idiolens {

/// Lowercases ASCII plus the Latin-1 supplement, Latin Extended-A, Greek and
/// basic Cyrillic capitals. Other code points pass through unchanged.
std::string casefold(std::string_view text);

/// Strips leading and trailing punctuation (ASCII plus common typographic
/// quotes and dashes). Returns an empty string for all-punctuation input.
std::string strip_punct(std::string_view token);

std::vector<std::string> split_whitespace(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace idiolens
