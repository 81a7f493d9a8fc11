#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace skelimg {

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
/// Throws Error(invalid_spec) on lines without '=' and on repeated keys.
std::map<std::string, std::string> parse_key_values(std::string_view text);

int parse_int(std::string_view key, std::string_view value);
std::uint64_t parse_seed(std::string_view key, std::string_view value);
double parse_real(std::string_view key, std::string_view value);
/// Comma-separated integers; `a-b` expands to an inclusive range.
std::vector<int> parse_int_list(std::string_view key, std::string_view value);

}  // namespace skelimg
