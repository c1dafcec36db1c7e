#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace legalrag::utf8 {

/// Decodes one scalar value starting at `pos`. Returns nullopt on malformed
/// input (overlong forms, surrogates, truncated sequences, > U+10FFFF).
inline std::optional<char32_t> decode_at(std::string_view s, std::size_t pos,
                                         std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  std::size_t n;
  char32_t cp;
  char32_t min;
  if ((b0 & 0xE0) == 0xC0) {
    n = 2, cp = b0 & 0x1F, min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    n = 3, cp = b0 & 0x0F, min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    n = 4, cp = b0 & 0x07, min = 0x10000;
  } else {
    return std::nullopt;
  }
  if (pos + n > s.size()) return std::nullopt;
  for (std::size_t i = 1; i < n; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return std::nullopt;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
    return std::nullopt;
  len = n;
  return cp;
}

inline bool is_valid(std::string_view s) {
  std::size_t pos = 0, len = 0;
  while (pos < s.size()) {
    if (!decode_at(s, pos, len)) return false;
    pos += len;
  }
  return true;
}

/// Decodes valid UTF-8. Behaviour on invalid input is unspecified; validate first.
inline std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t pos = 0, len = 1;
  while (pos < s.size()) {
    auto cp = decode_at(s, pos, len);
    out.push_back(cp ? *cp : U'�');
    pos += cp ? len : 1;
  }
  return out;
}

inline void append(std::string& out, char32_t cp) {
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
}

inline std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append(out, cp);
  return out;
}

/// Number of scalar values in valid UTF-8.
inline std::size_t length(std::string_view s) {
  std::size_t n = 0;
  for (char c : s)
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  return n;
}

/// Byte offset of every scalar value, plus a trailing entry equal to s.size().
inline std::vector<std::size_t> boundaries(std::string_view s) {
  std::vector<std::size_t> out;
  out.reserve(s.size() + 1);
  for (std::size_t i = 0; i < s.size(); ++i)
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) out.push_back(i);
  out.push_back(s.size());
  return out;
}

/// Unicode White_Space property.
constexpr bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

/// Splits on Unicode whitespace, dropping empty tokens.
inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  std::size_t pos = 0, len = 1;
  while (pos < s.size()) {
    auto cp = decode_at(s, pos, len);
    if (!cp) len = 1;
    if (cp && is_space(*cp)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.append(s.substr(pos, len));
    }
    pos += len;
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline std::string_view trim(std::string_view s) {
  std::size_t first = s.size(), last = 0;
  std::size_t pos = 0, len = 1;
  while (pos < s.size()) {
    auto cp = decode_at(s, pos, len);
    if (!cp) len = 1;
    if (!cp || !is_space(*cp)) {
      if (first == s.size()) first = pos;
      last = pos + len;
    }
    pos += len;
  }
  if (first == s.size()) return s.substr(0, 0);
  return s.substr(first, last - first);
}

} // namespace legalrag::utf8
