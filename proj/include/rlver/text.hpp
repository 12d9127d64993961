#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace rlver::text {

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  return lower(haystack).find(lower(needle)) != std::string::npos;
}

inline std::size_t count_words(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

/// Replaces typographic minus/dash code points judges like to emit with ASCII '-'.
inline std::string normalize_minus(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    // U+2212 MINUS SIGN, U+2013 EN DASH, U+2014 EM DASH in UTF-8.
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2) {
      auto b1 = static_cast<unsigned char>(s[i + 1]);
      auto b2 = static_cast<unsigned char>(s[i + 2]);
      if ((b1 == 0x88 && b2 == 0x92) || (b1 == 0x80 && (b2 == 0x93 || b2 == 0x94))) {
        out.push_back('-');
        i += 2;
        continue;
      }
    }
    out.push_back(s[i]);
  }
  return out;
}

struct NumberMatch {
  double value;
  std::size_t begin;
  std::size_t end;
};

/// First signed decimal number (no exponent) starting at or after `from`.
/// Overflowing or non-finite literals are skipped.
inline std::optional<NumberMatch> find_number(std::string_view s, std::size_t from = 0) {
  for (std::size_t i = from; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) continue;
    std::size_t begin = i;
    if (begin > 0 && (s[begin - 1] == '-' || s[begin - 1] == '+')) --begin;
    std::size_t end = i;
    while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    if (end + 1 < s.size() && s[end] == '.' &&
        std::isdigit(static_cast<unsigned char>(s[end + 1]))) {
      ++end;
      while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    }
    std::string_view lit = s.substr(begin, end - begin);
    if (!lit.empty() && lit.front() == '+') lit.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(lit.data(), lit.data() + lit.size(), v);
    if (ec == std::errc{} && ptr == lit.data() + lit.size() && std::isfinite(v)) {
      return NumberMatch{v, begin, end};
    }
    i = end;
  }
  return std::nullopt;
}

inline std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

inline std::string format_fixed(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // Avoid "-0.0000" so identical values always render identically.
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

}  // namespace rlver::text
