#pragma once

// Character-level morphological overlap between two words.
//
// Words are compared as sequences of Unicode scalar values. The overlap rate
// of two words is 2 * |LCS| / (|w1| + |w2|), where LCS is the longest common
// (not necessarily contiguous) character subsequence. A threshold gamma zeroes
// out weak overlaps so unrelated words sharing a stray letter earn nothing.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace qgrank {

/// Decodes UTF-8 into scalar values. Malformed sequences become U+FFFD.
inline std::u32string utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      cp = lead & 0x1F;
      extra = 1;
    } else if ((lead & 0xF0) == 0xE0) {
      cp = lead & 0x0F;
      extra = 2;
    } else if ((lead & 0xF8) == 0xF0) {
      cp = lead & 0x07;
      extra = 3;
    } else {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    if (i + extra >= text.size()) {
      out.push_back(U'\uFFFD');
      break;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      const auto c = static_cast<unsigned char>(text[i + k]);
      if ((c & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (c & 0x3F);
    }
    if (!ok) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

inline std::string utf8_encode(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) {
    if (c > 0x10FFFF || (c >= 0xD800 && c <= 0xDFFF)) c = U'\uFFFD';
    if (c < 0x80) {
      out += static_cast<char>(c);
    } else if (c < 0x800) {
      out += static_cast<char>(0xC0 | (c >> 6));
      out += static_cast<char>(0x80 | (c & 0x3F));
    } else if (c < 0x10000) {
      out += static_cast<char>(0xE0 | (c >> 12));
      out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (c & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (c >> 18));
      out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return out;
}

/// Simple case folding: ASCII, Latin-1 Supplement, Greek and Cyrillic capitals.
inline char32_t fold_case(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

inline std::u32string fold_case(std::u32string_view word) {
  std::u32string out(word);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](char32_t c) { return fold_case(c); });
  return out;
}

inline std::string lowercase_utf8(std::string_view text) {
  return utf8_encode(fold_case(utf8_decode(text)));
}

/// Threshold gamma in [0, 1] applied to raw overlap rates.
class OverlapThreshold {
public:
  constexpr OverlapThreshold() = default;
  explicit OverlapThreshold(double gamma) : gamma_(gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw ConfigError("gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
  constexpr double value() const { return gamma_; }

private:
  double gamma_ = 0.7;
};

struct MorphoOptions {
  bool case_fold = false;
};

/// Length of the longest common subsequence, O(|a|·|b|) time, O(min) space.
template <typename CharT>
std::size_t lcs_length(std::basic_string_view<CharT> a,
                       std::basic_string_view<CharT> b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.empty()) return 0;
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const CharT ca : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = (ca == b[j - 1]) ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::size_t lcs_length(std::u32string_view a, std::u32string_view b) {
  return lcs_length<char32_t>(a, b);
}

/// UTF-8 convenience overload.
inline std::size_t lcs_length(std::string_view a, std::string_view b,
                              MorphoOptions opts = {}) {
  auto ua = utf8_decode(a);
  auto ub = utf8_decode(b);
  if (opts.case_fold) {
    ua = fold_case(ua);
    ub = fold_case(ub);
  }
  return lcs_length(std::u32string_view(ua), std::u32string_view(ub));
}

/// 2·|LCS| / (|a| + |b|). Throws DegenerateInput when both words are empty.
inline double overlap_rate(std::u32string_view a, std::u32string_view b) {
  const std::size_t total = a.size() + b.size();
  if (total == 0) throw DegenerateInput("overlap_rate: both words are empty");
  return static_cast<double>(2 * lcs_length(a, b)) / static_cast<double>(total);
}

inline double overlap_rate(std::string_view a, std::string_view b,
                           MorphoOptions opts = {}) {
  auto ua = utf8_decode(a);
  auto ub = utf8_decode(b);
  if (opts.case_fold) {
    ua = fold_case(ua);
    ub = fold_case(ub);
  }
  return overlap_rate(std::u32string_view(ua), std::u32string_view(ub));
}

/// Overlap rate if it reaches gamma, otherwise exactly zero.
inline double thresholded_overlap(std::u32string_view a, std::u32string_view b,
                                  OverlapThreshold gamma) {
  const double c = overlap_rate(a, b);
  return c >= gamma.value() ? c : 0.0;
}

inline double thresholded_overlap(std::string_view a, std::string_view b,
                                  OverlapThreshold gamma,
                                  MorphoOptions opts = {}) {
  const double c = overlap_rate(a, b, opts);
  return c >= gamma.value() ? c : 0.0;
}

} // namespace qgrank
