#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loong::text {

/// Decodes UTF-8 into code points. Invalid bytes decode to themselves so
/// arbitrary input never throws.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

std::string_view trim(std::string_view s);
std::string join(std::span<const std::string> parts, std::string_view sep);
std::vector<std::string> split_lines(std::string_view s);
std::size_t word_count(std::string_view s);
bool is_space(char32_t c);

/// Contents of Markdown code fences (```lang ... ```), in order of
/// appearance. An unterminated final fence runs to the end of the input.
std::vector<std::string_view> fenced_blocks(std::string_view s);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);

/// splitmix64 finalizer; used to derive independent per-sample seeds.
std::uint64_t mix(std::uint64_t a, std::uint64_t b);

}  // namespace loong::text
