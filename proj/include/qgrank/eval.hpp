#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "morpho.hpp"
#include "vocab.hpp"

namespace qgrank {

using Sentence = std::vector<std::string>;

inline constexpr int kMaxBleuOrder = 4;

/// Clipped n-gram statistics for one candidate/reference pair or a corpus.
struct BleuStats {
  std::array<std::size_t, kMaxBleuOrder> matched{};
  std::array<std::size_t, kMaxBleuOrder> total{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kMaxBleuOrder; ++n) {
      matched[n] += o.matched[n];
      total[n] += o.total[n];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
  }
};

namespace detail {

inline std::map<std::vector<std::string_view>, std::size_t> ngram_counts(
    std::span<const std::string> sentence, std::size_t n) {
  std::map<std::vector<std::string_view>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= sentence.size(); ++i)
    ++counts[std::vector<std::string_view>(sentence.begin() + i, sentence.begin() + i + n)];
  return counts;
}

} // namespace detail

inline BleuStats bleu_stats(std::span<const std::string> candidate,
                            std::span<const std::string> reference) {
  BleuStats s;
  s.candidate_length = candidate.size();
  s.reference_length = reference.size();
  for (std::size_t n = 1; n <= kMaxBleuOrder; ++n) {
    const auto cand = detail::ngram_counts(candidate, n);
    const auto ref = detail::ngram_counts(reference, n);
    for (const auto& [gram, count] : cand) {
      s.total[n - 1] += count;
      if (auto it = ref.find(gram); it != ref.end())
        s.matched[n - 1] += std::min(count, it->second);
    }
  }
  return s;
}

/// exp(1 - r/c) when the candidate side is shorter, else 1; 0 for c = 0.
inline double brevity_penalty(std::size_t candidate_length, std::size_t reference_length) {
  if (candidate_length == 0) return 0.0;
  if (candidate_length >= reference_length) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_length) /
                            static_cast<double>(candidate_length));
}

struct BleuReport {
  /// BLEU-1..4 as percentages; orders above max_n are left at zero.
  std::array<double, kMaxBleuOrder> bleu{};
  std::array<double, kMaxBleuOrder> precisions{};
  double brevity_penalty = 0.0;
  std::size_t candidate_count = 0;
  int max_n = kMaxBleuOrder;
  BleuStats stats;
};

inline BleuReport bleu_from_stats(const BleuStats& s, int max_n, std::size_t count) {
  BleuReport r;
  r.max_n = max_n;
  r.candidate_count = count;
  r.stats = s;
  r.brevity_penalty = brevity_penalty(s.candidate_length, s.reference_length);
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 0; n < max_n; ++n) {
    r.precisions[n] = s.total[n] == 0 ? 0.0
                                      : static_cast<double>(s.matched[n]) /
                                            static_cast<double>(s.total[n]);
    if (r.precisions[n] == 0.0) zero = true;
    if (zero) continue;
    log_sum += std::log(r.precisions[n]);
    r.bleu[n] = 100.0 * r.brevity_penalty * std::exp(log_sum / (n + 1));
  }
  return r;
}

/// Corpus BLEU with clipping and brevity penalty, one reference per candidate.
/// An order with zero matches zeroes it and every higher order.
inline BleuReport corpus_bleu(std::span<const Sentence> candidates,
                              std::span<const Sentence> references,
                              int max_n = kMaxBleuOrder) {
  if (max_n < 1 || max_n > kMaxBleuOrder) throw ConfigError("max_n must be in 1..4");
  if (candidates.size() != references.size())
    throw DataError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                    std::to_string(references.size()) + " references");
  if (candidates.empty()) throw DataError("corpus_bleu: empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    total += bleu_stats(candidates[i], references[i]);
  return bleu_from_stats(total, max_n, candidates.size());
}

/// Sentence-level BLEU-4 in [0, 1]. Orders 2-4 use add-one smoothing on both
/// matched and total counts; unigram precision is unsmoothed.
inline double sentence_bleu4(std::span<const std::string> candidate,
                             std::span<const std::string> reference) {
  const BleuStats s = bleu_stats(candidate, reference);
  if (s.total[0] == 0 || s.matched[0] == 0) return 0.0;
  double log_sum = std::log(static_cast<double>(s.matched[0]) / static_cast<double>(s.total[0]));
  for (int n = 1; n < kMaxBleuOrder; ++n)
    log_sum += std::log((static_cast<double>(s.matched[n]) + 1.0) /
                        (static_cast<double>(s.total[n]) + 1.0));
  return brevity_penalty(s.candidate_length, s.reference_length) *
         std::exp(log_sum / kMaxBleuOrder);
}

/// Prefix pattern such as "what is/was the name of ...". A token containing
/// '/' is an alternation slot, a trailing "..." matches any remainder, and
/// trailing "?" is dropped. Without "..." the whole question must match.
class TemplatePattern {
public:
  static TemplatePattern parse(std::string_view text) {
    TemplatePattern p;
    p.text_ = std::string(text);
    auto tokens = split_whitespace(text);
    while (!tokens.empty() && tokens.back() == "?") tokens.pop_back();
    if (!tokens.empty()) {
      std::string& last = tokens.back();
      while (!last.empty() && last.back() == '?') last.pop_back();
      if (last.size() >= 3 && last.ends_with("...")) {
        p.wildcard_ = true;
        last.resize(last.size() - 3);
        if (last.empty()) tokens.pop_back();
      }
    }
    if (tokens.empty()) throw DataError("empty template pattern '" + p.text_ + "'");
    for (auto& t : tokens) {
      std::string lower;
      for (char c : t) lower += (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c;
      std::vector<std::string> alts;
      std::size_t start = 0;
      while (true) {
        const auto slash = lower.find('/', start);
        alts.push_back(lower.substr(start, slash - start));
        if (slash == std::string::npos) break;
        start = slash + 1;
      }
      if (std::any_of(alts.begin(), alts.end(), [](const auto& a) { return a.empty(); }))
        throw DataError("empty alternative in template pattern '" + p.text_ + "'");
      if (alts.size() > 1) {
        if (p.slot_index_) throw DataError("template pattern has more than one slot: " + p.text_);
        p.slot_index_ = p.tokens_.size();
        p.slot_values_ = alts;
      }
      p.tokens_.push_back(std::move(alts));
    }
    return p;
  }

  const std::string& text() const { return text_; }
  const std::vector<std::string>& slot_values() const { return slot_values_; }

  /// Index of the matched slot alternative (0 when there is no slot), or
  /// nullopt when the question does not match.
  std::optional<std::size_t> match(std::span<const std::string> question) const {
    if (question.size() < tokens_.size()) return std::nullopt;
    if (!wildcard_ && question.size() != tokens_.size()) return std::nullopt;
    std::size_t slot = 0;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& alts = tokens_[i];
      auto it = std::find(alts.begin(), alts.end(), question[i]);
      if (it == alts.end()) return std::nullopt;
      if (slot_index_ && *slot_index_ == i) slot = static_cast<std::size_t>(it - alts.begin());
    }
    return slot;
  }

private:
  std::string text_;
  std::vector<std::vector<std::string>> tokens_;
  std::optional<std::size_t> slot_index_;
  std::vector<std::string> slot_values_;
  bool wildcard_ = false;
};

/// The five generic-question templates tallied for the baseline comparison.
inline std::vector<TemplatePattern> default_templates() {
  return {
      TemplatePattern::parse("what is/was the name of ...?"),
      TemplatePattern::parse("what type of ...?"),
      TemplatePattern::parse("what is/was another name ...?"),
      TemplatePattern::parse("what is/was the total ...?"),
      TemplatePattern::parse("what is/was it ...?"),
  };
}

/// One pattern per non-empty line; lines starting with '#' are comments.
inline std::vector<TemplatePattern> load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open template file " + path);
  std::vector<TemplatePattern> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[line.find_first_not_of(" \t")] == '#') continue;
    out.push_back(TemplatePattern::parse(line));
  }
  return out;
}

struct TemplateCount {
  std::string pattern;
  std::vector<std::string> slot_values;
  /// One entry per slot value, or a single entry for slot-free patterns.
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

inline std::vector<TemplateCount> count_templates(std::span<const Sentence> questions,
                                                  std::span<const TemplatePattern> patterns) {
  std::vector<TemplateCount> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns)
    out.push_back({p.text(), p.slot_values(),
                   std::vector<std::size_t>(std::max<std::size_t>(1, p.slot_values().size()), 0)});
  for (const auto& q : questions)
    for (std::size_t i = 0; i < patterns.size(); ++i)
      if (auto slot = patterns[i].match(q)) ++out[i].counts[*slot];
  return out;
}

inline bool is_punctuation_char(char32_t c) {
  if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
                       (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
  return (c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB2 && c != 0xB3 && c != 0xB5 &&
          c != 0xB9 && c != 0xBA && c != 0xBC && c != 0xBD && c != 0xBE) ||
         c == 0xD7 || c == 0xF7 || (c >= 0x2010 && c <= 0x2027) ||
         (c >= 0x2030 && c <= 0x205E) || (c >= 0x3000 && c <= 0x303F);
}

/// True for a non-empty token made only of punctuation characters.
inline bool is_punctuation_token(std::string_view token) {
  const auto cs = utf8_decode(token);
  return !cs.empty() && std::all_of(cs.begin(), cs.end(), is_punctuation_char);
}

/// Fraction of non-punctuation question tokens that have some passage token
/// with a non-zero thresholded overlap. Zero if every token is punctuation.
inline double copy_rate(std::span<const std::string> question,
                        std::span<const std::string> passage, OverlapThreshold gamma,
                        MorphoOptions opts = {}) {
  if (question.empty()) throw DegenerateInput("copy_rate: empty question");
  std::vector<std::u32string> source;
  source.reserve(passage.size());
  for (const auto& s : passage) {
    auto u = utf8_decode(s);
    source.push_back(opts.case_fold ? fold_case(u) : u);
  }
  std::size_t words = 0, copied = 0;
  for (const auto& w : question) {
    if (is_punctuation_token(w)) continue;
    ++words;
    auto u = utf8_decode(w);
    if (opts.case_fold) u = fold_case(u);
    for (const auto& s : source) {
      if (u.empty() && s.empty()) continue;
      if (thresholded_overlap(u, s, gamma) > 0.0) {
        ++copied;
        break;
      }
    }
  }
  return words == 0 ? 0.0 : static_cast<double>(copied) / static_cast<double>(words);
}

struct CopyRateReport {
  std::vector<double> per_question;
  double mean = 0.0;
};

inline CopyRateReport copy_rate_report(std::span<const Sentence> questions,
                                       std::span<const Sentence> passages,
                                       OverlapThreshold gamma, MorphoOptions opts = {}) {
  if (questions.size() != passages.size())
    throw DataError("copy_rate: " + std::to_string(questions.size()) + " questions vs " +
                    std::to_string(passages.size()) + " passages");
  CopyRateReport r;
  double sum = 0.0;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    r.per_question.push_back(copy_rate(questions[i], passages[i], gamma, opts));
    sum += r.per_question.back();
  }
  r.mean = questions.empty() ? 0.0 : sum / static_cast<double>(questions.size());
  return r;
}

struct RerankDelta {
  std::size_t improved = 0;
  std::size_t worsened = 0;
  std::size_t unchanged = 0;

  friend bool operator==(const RerankDelta&, const RerankDelta&) = default;
};

/// Per-example sentence BLEU-4 comparison of `after` against `before`.
inline RerankDelta rerank_delta(std::span<const Sentence> before, std::span<const Sentence> after,
                                std::span<const Sentence> references) {
  if (before.size() != after.size() || before.size() != references.size())
    throw DataError("rerank_delta: lists differ in length (" + std::to_string(before.size()) +
                    ", " + std::to_string(after.size()) + ", " +
                    std::to_string(references.size()) + ")");
  RerankDelta d;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const double b = sentence_bleu4(before[i], references[i]);
    const double a = sentence_bleu4(after[i], references[i]);
    if (a > b)
      ++d.improved;
    else if (a < b)
      ++d.worsened;
    else
      ++d.unchanged;
  }
  return d;
}

} // namespace qgrank
