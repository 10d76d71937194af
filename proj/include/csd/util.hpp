#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace csd {

// 64-bit FNV-1a. Stable across platforms, used for prompt keys and cache keys.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

std::string_view trim_view(std::string_view s);
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::size_t word_count(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

}  // namespace csd
