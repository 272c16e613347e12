#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace thmsearch::detail {

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Length in bytes of the sequence introduced by lead byte `c`; stray
// continuation or invalid lead bytes count as one byte.
inline std::size_t sequence_length(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) return 2;
  if ((c & 0xF0) == 0xE0) return 3;
  if ((c & 0xF8) == 0xF0) return 4;
  return 1;
}

// Byte offset of every code point start, plus a final entry == text.size().
inline std::vector<std::size_t> char_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  std::size_t i = 0;
  while (i < text.size()) {
    offsets.push_back(i);
    std::size_t len = sequence_length(static_cast<unsigned char>(text[i]));
    std::size_t j = i + 1;
    while (j < text.size() && j < i + len && is_continuation(static_cast<unsigned char>(text[j]))) ++j;
    i = j;
  }
  offsets.push_back(text.size());
  return offsets;
}

inline std::size_t char_count(std::string_view text) { return char_offsets(text).size() - 1; }

// Splits into code points, each as its UTF-8 byte string.
inline std::vector<std::string_view> split_chars(std::string_view text) {
  auto offsets = char_offsets(text);
  std::vector<std::string_view> out;
  out.reserve(offsets.size() - 1);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
    out.push_back(text.substr(offsets[i], offsets[i + 1] - offsets[i]));
  return out;
}

}  // namespace thmsearch::detail
