#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dapt::text {

/// Decodes UTF-8; invalid bytes become U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

char32_t to_lower(char32_t c);
bool is_space(char32_t c);
bool is_punctuation(char32_t c);

std::string trim(std::string_view s);
bool is_blank(std::string_view s);
std::string lowercase(std::string_view s);

/// Leading run of letters/digits, lowercased ("Yes, both" -> "yes").
std::string first_word(std::string_view s);

/// English display name for known codes, else the code itself.
std::string language_name(std::string_view code);

}  // namespace dapt::text
