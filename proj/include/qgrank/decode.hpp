#pragma once

// Beam search with partial-copy probability re-adjustment.
//
// At every decoder step the passage word with the highest attention weight is
// taken as the source of the generated word. Each vocabulary word w gets the
// thresholded overlap C_w against that source word, its probability is scaled
// by (1 + lambda1 * C_w), and the result is renormalized before scoring.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "morpho.hpp"
#include "vocab.hpp"

namespace qgrank {

/// One decoder step: a distribution over the vocabulary and attention over
/// passage positions.
struct StepOutput {
  std::vector<double> distribution;
  std::vector<double> attention;

  friend bool operator==(const StepOutput&, const StepOutput&) = default;
};

/// Throws DataError unless both vectors are non-negative, correctly sized and
/// sum to one within `tolerance`.
inline void validate_step(const StepOutput& step, std::size_t vocab_size,
                          std::size_t passage_length, double tolerance,
                          const std::string& where = "step") {
  auto check = [&](const std::vector<double>& v, std::size_t n, const char* what) {
    if (v.size() != n)
      throw DataError(where + ": " + what + " has length " + std::to_string(v.size()) +
                      ", expected " + std::to_string(n));
    double sum = 0.0;
    for (double x : v) {
      if (!(x >= 0.0) || !std::isfinite(x))
        throw DataError(where + ": " + what + " has a negative or non-finite entry");
      sum += x;
    }
    if (std::abs(sum - 1.0) > tolerance)
      throw DataError(where + ": " + what + " sums to " + std::to_string(sum));
  };
  check(step.distribution, vocab_size, "distribution");
  check(step.attention, passage_length, "attention");
}

struct PartialCopyConfig {
  OverlapThreshold gamma{0.7};
  double lambda1 = 1.0;
  bool enabled = true;
  MorphoOptions morpho{};

  void validate() const {
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
      throw ConfigError("lambda1 must be finite and >= 0, got " + std::to_string(lambda1));
  }

  bool active() const { return enabled && lambda1 != 0.0; }
};

struct BeamConfig {
  std::size_t beam_size = 20;
  std::size_t max_length = 30;
  std::size_t nbest_size = 20;

  void validate() const {
    if (beam_size == 0) throw ConfigError("beam_size must be positive");
    if (max_length == 0) throw ConfigError("max_length must be positive");
    if (nbest_size == 0) throw ConfigError("nbest_size must be positive");
    if (nbest_size > beam_size)
      throw ConfigError("nbest_size (" + std::to_string(nbest_size) +
                        ") must not exceed beam_size (" + std::to_string(beam_size) + ")");
  }
};

/// A partial or finished question. `tokens` never contains the start or end
/// marker; `complete` records whether the end marker was emitted, and its
/// probability is included in `log_prob`.
struct Hypothesis {
  TokenSequence tokens;
  double log_prob = 0.0;
  std::vector<std::size_t> aligned_positions;
  bool complete = false;

  /// Number of scored decoder steps.
  std::size_t steps() const { return tokens.size() + (complete ? 1 : 0); }

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

using NBestList = std::vector<Hypothesis>;

/// What a generator is conditioned on.
struct DecodeInput {
  std::string id;
  std::vector<std::string> passage;
  std::vector<std::string> answer;
};

/// Argmax of the attention weights, smallest index on ties.
inline std::size_t aligned_source_position(std::span<const double> attention) {
  if (attention.empty())
    throw DegenerateInput("aligned_source_position: empty attention vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < attention.size(); ++i)
    if (attention[i] > attention[best]) best = i;
  return best;
}

/// Memoized thresholded overlap of every vocabulary word against a source
/// word. Reserved markers always get zero. Not thread-safe; one per session.
class OverlapCache {
public:
  OverlapCache(const Vocabulary& vocab, PartialCopyConfig config)
      : vocab_(&vocab), config_(config) {
    if (config_.morpho.case_fold) {
      folded_.reserve(vocab.size());
      for (std::size_t i = 0; i < vocab.size(); ++i)
        folded_.push_back(fold_case(vocab.scalars(static_cast<TokenId>(i))));
    }
  }

  struct Rates {
    std::vector<double> values;
    bool any_positive = false;
  };

  const Rates& rates(const std::string& source_word) {
    auto it = cache_.find(source_word);
    if (it != cache_.end()) return it->second;
    std::u32string source = utf8_decode(source_word);
    if (config_.morpho.case_fold) source = fold_case(source);
    Rates r;
    r.values.assign(vocab_->size(), 0.0);
    for (std::size_t i = 0; i < vocab_->size(); ++i) {
      const auto id = static_cast<TokenId>(i);
      if (Vocabulary::is_marker(id)) continue;
      const std::u32string& w =
          config_.morpho.case_fold ? folded_[i] : vocab_->scalars(id);
      if (w.empty() && source.empty()) continue;
      r.values[i] = thresholded_overlap(w, source, config_.gamma);
      if (r.values[i] > 0.0) r.any_positive = true;
    }
    return cache_.emplace(source_word, std::move(r)).first->second;
  }

  const PartialCopyConfig& config() const { return config_; }

private:
  const Vocabulary* vocab_;
  PartialCopyConfig config_;
  std::vector<std::u32string> folded_;
  std::map<std::string, Rates> cache_;
};

/// Re-adjusted, renormalized distribution for one step. Returns the input
/// unchanged when the mechanism is inactive or no word overlaps the source.
inline std::vector<double> adjust_distribution(const StepOutput& step,
                                               std::span<const std::string> passage,
                                               OverlapCache& cache) {
  const auto& config = cache.config();
  if (!config.active()) return step.distribution;
  const std::size_t pos = aligned_source_position(step.attention);
  if (pos >= passage.size())
    throw DataError("attention length exceeds passage length");
  const auto& rates = cache.rates(passage[pos]);
  if (!rates.any_positive) return step.distribution;
  if (rates.values.size() != step.distribution.size())
    throw DataError("distribution size does not match vocabulary size");

  std::vector<double> adjusted(step.distribution.size());
  double total = 0.0;
  for (std::size_t i = 0; i < adjusted.size(); ++i) {
    adjusted[i] = step.distribution[i] * (1.0 + config.lambda1 * rates.values[i]);
    total += adjusted[i];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw InvariantError("adjust_distribution: zero or non-finite total mass");
  for (double& p : adjusted) p /= total;
  return adjusted;
}

inline std::vector<double> adjust_distribution(const StepOutput& step,
                                               std::span<const std::string> passage,
                                               const Vocabulary& vocab,
                                               const PartialCopyConfig& config) {
  OverlapCache cache(vocab, config);
  return adjust_distribution(step, passage, cache);
}

/// A generator exposes its vocabulary and opens per-input sessions whose
/// `step(prefix)` is a pure function of the input and the prefix. Prefixes
/// start with the start marker.
template <typename M>
concept generator_model =
    requires(const M& model, const DecodeInput& input) {
      typename M::session_type;
      { model.vocabulary() } -> std::same_as<const Vocabulary&>;
      { model.begin_session(input) } -> std::same_as<typename M::session_type>;
    } &&
    requires(typename M::session_type& session, std::span<const TokenId> prefix) {
      { session.step(prefix) } -> std::convertible_to<StepOutput>;
    };

namespace detail {

inline bool by_score_desc(const Hypothesis& a, const Hypothesis& b) {
  return a.log_prob > b.log_prob;
}

} // namespace detail

/// Beam search. Each step, every surviving hypothesis is extended by every
/// token with non-zero adjusted probability; the best `beam_size` extensions
/// are kept, of which those ending in the end marker are retired to the
/// finished pool. Stops once the pool holds `beam_size` hypotheses, the beam
/// empties, or `max_length` steps have run. The result holds the best
/// `nbest_size` finished hypotheses, topped up with length-truncated ones when
/// too few finished, sorted by descending log-probability (stable).
template <generator_model Model>
NBestList beam_search(const Model& model, const DecodeInput& input,
                      const BeamConfig& beam, const PartialCopyConfig& copy) {
  beam.validate();
  copy.validate();
  if (input.passage.empty()) throw DataError("example '" + input.id + "': empty passage");

  const Vocabulary& vocab = model.vocabulary();
  auto session = model.begin_session(input);
  OverlapCache cache(vocab, copy);

  std::vector<Hypothesis> alive{Hypothesis{}};
  std::vector<Hypothesis> finished;
  TokenSequence prefix;

  for (std::size_t step = 0; step < beam.max_length && !alive.empty() &&
                             finished.size() < beam.beam_size;
       ++step) {
    std::vector<Hypothesis> extensions;
    for (const Hypothesis& hyp : alive) {
      prefix.assign(1, Vocabulary::kBos);
      prefix.insert(prefix.end(), hyp.tokens.begin(), hyp.tokens.end());
      const StepOutput out = session.step(std::span<const TokenId>(prefix));
      if (out.distribution.size() != vocab.size())
        throw DataError("example '" + input.id + "': model distribution has size " +
                        std::to_string(out.distribution.size()) + ", vocabulary has " +
                        std::to_string(vocab.size()));
      if (out.attention.size() != input.passage.size())
        throw DataError("example '" + input.id + "': attention length " +
                        std::to_string(out.attention.size()) + " != passage length " +
                        std::to_string(input.passage.size()));
      const std::size_t aligned = aligned_source_position(out.attention);
      const std::vector<double> probs = adjust_distribution(out, input.passage, cache);
      for (std::size_t t = 0; t < probs.size(); ++t) {
        if (!(probs[t] > 0.0)) continue;
        Hypothesis next = hyp;
        next.log_prob += std::log(probs[t]);
        if (t == Vocabulary::kEos) {
          next.complete = true;
        } else {
          next.tokens.push_back(static_cast<TokenId>(t));
          next.aligned_positions.push_back(aligned);
        }
        extensions.push_back(std::move(next));
      }
    }
    std::stable_sort(extensions.begin(), extensions.end(), detail::by_score_desc);
    if (extensions.size() > beam.beam_size) extensions.resize(beam.beam_size);

    alive.clear();
    for (auto& h : extensions) {
      if (h.complete)
        finished.push_back(std::move(h));
      else
        alive.push_back(std::move(h));
    }
  }

  std::stable_sort(finished.begin(), finished.end(), detail::by_score_desc);
  NBestList result(finished.begin(),
                   finished.begin() + std::min(finished.size(), beam.nbest_size));
  if (result.size() < beam.nbest_size) {
    // Survivors are already sorted; only those that ran out of length count.
    for (auto& h : alive) {
      if (result.size() >= beam.nbest_size) break;
      if (h.tokens.size() == beam.max_length) result.push_back(std::move(h));
    }
    std::stable_sort(result.begin(), result.end(), detail::by_score_desc);
  }
  return result;
}

} // namespace qgrank
