#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "morpho.hpp"

namespace qgrank {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

/// Bidirectional word <-> id table. Ids 0..2 are the reserved markers.
class Vocabulary {
public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr std::string_view kBosWord = "<s>";
  static constexpr std::string_view kEosWord = "</s>";
  static constexpr std::string_view kUnkWord = "<unk>";

  Vocabulary() {
    add(std::string(kBosWord));
    add(std::string(kEosWord));
    add(std::string(kUnkWord));
  }

  Vocabulary(std::initializer_list<std::string> words) : Vocabulary() {
    for (const auto& w : words) add(w);
  }

  /// Returns the id of `word`, inserting it if new.
  TokenId add(const std::string& word) {
    if (word.empty()) throw DataError("vocabulary words must be non-empty");
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    const auto id = static_cast<TokenId>(words_.size());
    index_.emplace(word, id);
    words_.push_back(word);
    scalars_.push_back(utf8_decode(word));
    return id;
  }

  /// Id of `word`, or kUnk.
  TokenId id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(std::string_view word) const {
    return index_.count(std::string(word)) != 0;
  }

  const std::string& word(TokenId id) const {
    check(id);
    return words_[id];
  }

  const std::u32string& scalars(TokenId id) const {
    check(id);
    return scalars_[id];
  }

  static constexpr bool is_marker(TokenId id) { return id <= kUnk; }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  TokenSequence encode(std::span<const std::string> words) const {
    TokenSequence ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id(w));
    return ids;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (auto t : ids) out.push_back(word(t));
    return out;
  }

  /// Builds from a word list. A leading copy of the three markers is accepted
  /// and skipped; duplicate words are rejected.
  static Vocabulary from_words(std::span<const std::string> words) {
    Vocabulary v;
    std::size_t start = 0;
    if (words.size() >= 3 && words[0] == kBosWord && words[1] == kEosWord &&
        words[2] == kUnkWord)
      start = 3;
    for (std::size_t i = start; i < words.size(); ++i) {
      if (v.contains(words[i]))
        throw DataError("duplicate vocabulary word '" + words[i] + "'");
      v.add(words[i]);
    }
    return v;
  }

  /// One word per line.
  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      words.push_back(line);
    }
    return from_words(words);
  }

  /// Writes one word per line, markers included.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const auto& w : words_) out << w << '\n';
  }

private:
  void check(TokenId id) const {
    if (id >= words_.size())
      throw DataError("token id " + std::to_string(id) +
                      " out of range for vocabulary of size " +
                      std::to_string(words_.size()));
  }

  std::vector<std::string> words_;
  std::vector<std::u32string> scalars_;
  std::unordered_map<std::string, TokenId> index_;
};

inline std::string join(std::span<const std::string> words,
                        std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' ||
                               text[i] == '\n' || text[i] == '\r'))
      ++i;
    std::size_t j = i;
    while (j < text.size() && !(text[j] == ' ' || text[j] == '\t' ||
                                text[j] == '\n' || text[j] == '\r'))
      ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

} // namespace qgrank
