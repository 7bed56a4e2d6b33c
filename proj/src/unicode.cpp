#include "codemix/unicode.hpp"

#include "codemix/common.hpp"

namespace codemix::unicode {

namespace {

int sequence_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 0;
}

}  // namespace

std::vector<uint32_t> decode(std::string_view utf8) {
  std::vector<uint32_t> out;
  out.reserve(utf8.size());
  size_t i = 0;
  while (i < utf8.size()) {
    const unsigned char lead = static_cast<unsigned char>(utf8[i]);
    const int len = sequence_length(lead);
    if (len == 0 || i + static_cast<size_t>(len) > utf8.size()) {
      throw ParseError("invalid UTF-8 at byte offset " + std::to_string(i));
    }
    uint32_t cp = 0;
    switch (len) {
      case 1:
        cp = lead;
        break;
      case 2:
        cp = lead & 0x1Fu;
        break;
      case 3:
        cp = lead & 0x0Fu;
        break;
      case 4:
        cp = lead & 0x07u;
        break;
    }
    for (int k = 1; k < len; ++k) {
      const unsigned char cont = static_cast<unsigned char>(utf8[i + static_cast<size_t>(k)]);
      if ((cont >> 6) != 0x2) {
        throw ParseError("invalid UTF-8 continuation at byte offset " + std::to_string(i + static_cast<size_t>(k)));
      }
      cp = (cp << 6) | (cont & 0x3Fu);
    }
    // Reject overlong encodings and surrogate range.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      throw ParseError("invalid UTF-8 scalar at byte offset " + std::to_string(i));
    }
    out.push_back(cp);
    i += static_cast<size_t>(len);
  }
  return out;
}

std::string encode_one(uint32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string encode(const std::vector<uint32_t>& codepoints) {
  std::string out;
  out.reserve(codepoints.size());
  for (uint32_t cp : codepoints) out += encode_one(cp);
  return out;
}

size_t length(std::string_view utf8) { return decode(utf8).size(); }

bool is_space(uint32_t cp) {
  switch (cp) {
    case 0x09:
    case 0x0A:
    case 0x0B:
    case 0x0C:
    case 0x0D:
    case 0x20:
    case 0x85:
    case 0xA0:
    case 0x1680:
    case 0x2028:
    case 0x2029:
    case 0x202F:
    case 0x205F:
    case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

std::vector<std::string> split_words(std::string_view utf8) {
  const std::vector<uint32_t> cps = decode(utf8);
  std::vector<std::string> words;
  std::vector<uint32_t> current;
  for (uint32_t cp : cps) {
    if (is_space(cp)) {
      if (!current.empty()) {
        words.push_back(encode(current));
        current.clear();
      }
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) words.push_back(encode(current));
  return words;
}

std::string truncate(std::string_view utf8, size_t limit) {
  // Walk code points and cut at a sequence boundary; never splits a scalar.
  size_t count = 0;
  size_t i = 0;
  while (i < utf8.size() && count < limit) {
    const int len = sequence_length(static_cast<unsigned char>(utf8[i]));
    if (len == 0 || i + static_cast<size_t>(len) > utf8.size()) {
      throw ParseError("invalid UTF-8 at byte offset " + std::to_string(i));
    }
    i += static_cast<size_t>(len);
    ++count;
  }
  if (i >= utf8.size()) return std::string(utf8);
  return std::string(utf8.substr(0, i));
}

}  // namespace codemix::unicode
