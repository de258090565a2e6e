#pragma once

// QA-based reranking of n-best questions.
//
// Each candidate question is handed to a QA oracle; the predicted answer is
// compared with the gold answer by character-set F1, and the candidate is
// rescored as (1 - lambda2) * log_prob + lambda2 * F1.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "decode.hpp"
#include "error.hpp"
#include "morpho.hpp"
#include "vocab.hpp"

namespace qgrank {

inline bool is_unicode_space(char32_t c) {
  return c == U' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 ||
         c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
         c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

/// Distinct case-folded non-whitespace characters of `text`.
inline std::set<char32_t> char_set(std::string_view text) {
  std::set<char32_t> out;
  for (char32_t c : utf8_decode(text))
    if (!is_unicode_space(c)) out.insert(fold_case(c));
  return out;
}

/// F1 between the character sets of two answers; 0 if either set is empty.
inline double char_f1(std::string_view predicted, std::string_view gold) {
  const auto a = char_set(predicted);
  const auto b = char_set(gold);
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  for (char32_t c : a) common += b.count(c);
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(a.size());
  const double recall = static_cast<double>(common) / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

struct RerankConfig {
  double lambda2 = 0.2;
  /// Divide score1 by the number of decoder steps before combining.
  bool normalize_score1 = false;

  void validate() const {
    if (!(lambda2 >= 0.0 && lambda2 <= 1.0))
      throw ConfigError("lambda2 must lie in [0, 1], got " + std::to_string(lambda2));
  }
};

struct CandidateScore {
  double score1 = 0.0;
  double score2 = 0.0;
  double combined = 0.0;
};

inline double combined_score(double score1, double score2, const RerankConfig& config) {
  return (1.0 - config.lambda2) * score1 + config.lambda2 * score2;
}

/// A decoded question as stored in n-best files.
struct Candidate {
  std::vector<std::string> tokens;
  double log_prob = 0.0;
  std::vector<std::size_t> aligned_positions;
  bool complete = false;

  std::string question() const { return join(tokens); }
};

inline std::vector<Candidate> to_candidates(const NBestList& nbest, const Vocabulary& vocab) {
  std::vector<Candidate> out;
  out.reserve(nbest.size());
  for (const auto& h : nbest)
    out.push_back({vocab.decode(h.tokens), h.log_prob, h.aligned_positions, h.complete});
  return out;
}

struct RerankedCandidate {
  Candidate candidate;
  std::string predicted_answer;
  CandidateScore score;
  std::size_t old_rank = 0;
  std::size_t new_rank = 0;
};

/// predict_answer(example id, passage, question) -> answer string.
template <typename O>
concept qa_oracle = requires(const O& oracle, const std::string& id,
                             std::span<const std::string> passage,
                             std::span<const std::string> question) {
  { oracle.predict_answer(id, passage, question) } -> std::convertible_to<std::string>;
};

/// Passage span of at most `max_span` tokens containing the most tokens that
/// also occur in the question. Earliest start wins ties, then the shortest.
inline std::string toy_span_oracle(std::span<const std::string> passage,
                                   std::span<const std::string> question,
                                   std::size_t max_span) {
  if (passage.empty()) throw DegenerateInput("toy_span_oracle: empty passage");
  if (max_span == 0) throw ConfigError("toy_span_oracle: max_span must be positive");
  const std::set<std::string_view> asked(question.begin(), question.end());
  std::size_t best_start = 0, best_len = 1, best_hits = 0;
  bool have = false;
  for (std::size_t start = 0; start < passage.size(); ++start) {
    std::size_t hits = 0;
    for (std::size_t len = 1; len <= max_span && start + len <= passage.size(); ++len) {
      hits += asked.count(passage[start + len - 1]);
      if (!have || hits > best_hits) {
        best_start = start;
        best_len = len;
        best_hits = hits;
        have = true;
      }
    }
  }
  return join(passage.subspan(best_start, best_len));
}

struct ToySpanOracle {
  std::size_t max_span = 4;

  std::string predict_answer(const std::string& /*id*/, std::span<const std::string> passage,
                             std::span<const std::string> question) const {
    return toy_span_oracle(passage, question, max_span);
  }
};

/// Answers from recorded predictions keyed by (example id, question string).
class ReplayQAOracle {
public:
  void insert(const std::string& id, const std::string& question, std::string answer) {
    if (!table_.emplace(std::make_pair(id, question), std::move(answer)).second)
      throw DataError("duplicate QA prediction for id '" + id + "', question '" + question + "'");
  }

  std::string predict_answer(const std::string& id, std::span<const std::string> /*passage*/,
                             std::span<const std::string> question) const {
    const std::string q = join(question);
    auto it = table_.find({id, q});
    if (it == table_.end())
      throw OracleMiss("no QA prediction for id '" + id + "', question '" + q + "'");
    return it->second;
  }

  std::size_t size() const { return table_.size(); }

  /// Lines of {"id", "question": space-joined string, "answer": string}.
  static ReplayQAOracle load(std::istream& in, const std::string& source = "predictions") {
    ReplayQAOracle oracle;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = source + ":" + std::to_string(line_no);
      try {
        const auto j = nlohmann::json::parse(line);
        oracle.insert(j.at("id").get<std::string>(),
                      join(split_whitespace(j.at("question").get<std::string>())),
                      j.at("answer").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": " + e.what());
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
    }
    return oracle;
  }

  static ReplayQAOracle load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open QA prediction file " + path);
    return load(in, path);
  }

private:
  std::map<std::pair<std::string, std::string>, std::string> table_;
};

inline double score1_of(const Candidate& c, const RerankConfig& config) {
  if (!config.normalize_score1) return c.log_prob;
  const std::size_t steps = c.tokens.size() + (c.complete ? 1 : 0);
  return steps == 0 ? c.log_prob : c.log_prob / static_cast<double>(steps);
}

/// Scores every candidate and stably sorts by descending combined score.
/// Ranks are zero-based; old_rank is the input position.
template <qa_oracle Oracle>
std::vector<RerankedCandidate> rerank(std::span<const Candidate> nbest, const std::string& id,
                                      std::span<const std::string> passage,
                                      std::string_view gold_answer, const Oracle& oracle,
                                      const RerankConfig& config) {
  config.validate();
  if (nbest.empty()) throw DataError("rerank: empty n-best list for '" + id + "'");
  std::vector<RerankedCandidate> out;
  out.reserve(nbest.size());
  for (std::size_t i = 0; i < nbest.size(); ++i) {
    RerankedCandidate r;
    r.candidate = nbest[i];
    try {
      r.predicted_answer = oracle.predict_answer(id, passage, nbest[i].tokens);
    } catch (const DataError& e) {
      throw DataError("QA oracle failed on candidate " + std::to_string(i) + " ('" +
                      nbest[i].question() + "') of '" + id + "': " + e.what());
    }
    r.score.score1 = score1_of(nbest[i], config);
    r.score.score2 = char_f1(r.predicted_answer, gold_answer);
    r.score.combined = combined_score(r.score.score1, r.score.score2, config);
    r.old_rank = i;
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.score.combined > b.score.combined;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].new_rank = i;
  return out;
}

} // namespace qgrank
