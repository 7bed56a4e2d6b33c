#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace codemix::unicode {

// Strict UTF-8 decoding; malformed sequences throw ParseError. Social-media
// dumps occasionally carry broken encodings and we refuse to guess.
std::vector<uint32_t> decode(std::string_view utf8);
std::string encode(const std::vector<uint32_t>& codepoints);
std::string encode_one(uint32_t codepoint);

size_t length(std::string_view utf8);

bool is_space(uint32_t codepoint);

// Whitespace-delimited surface words, empty tokens dropped.
std::vector<std::string> split_words(std::string_view utf8);

// First `limit` code points; text shorter than the limit is returned unchanged.
std::string truncate(std::string_view utf8, size_t limit);

}  // namespace codemix::unicode
