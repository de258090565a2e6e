#pragma once

// Built-in invariant checks run by `qgrank --seed-check`. Fixed seed, so the
// outcome is reproducible.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "decode.hpp"
#include "eval.hpp"
#include "morpho.hpp"
#include "rerank.hpp"

namespace qgrank {

struct CheckResult {
  std::string name;
  bool passed = false;
};

namespace detail {

inline std::string random_word(std::mt19937_64& rng, std::size_t max_len, std::string_view alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string w(len(rng), ' ');
  for (char& c : w) c = alphabet[pick(rng)];
  return w;
}

/// Longest common subsequence by trying every subsequence of `a`.
inline std::size_t lcs_by_enumeration(const std::string& a, const std::string& b) {
  std::size_t best = 0;
  for (unsigned long mask = 0; mask < (1ul << a.size()); ++mask) {
    std::size_t j = 0, len = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask & (1ul << i))) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else {
        ++j;
        ++len;
      }
    }
    if (ok) best = std::max(best, len);
  }
  return best;
}

} // namespace detail

inline std::vector<CheckResult> run_self_check(unsigned long long seed = 20191103) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> results;

  {
    bool ok = true;
    for (int t = 0; t < 500 && ok; ++t) {
      const auto a = detail::random_word(rng, 8, "abc");
      const auto b = detail::random_word(rng, 8, "abc");
      ok = lcs_length(a, b) == detail::lcs_by_enumeration(a, b) && lcs_length(a, b) == lcs_length(b, a);
    }
    results.push_back({"lcs matches subsequence enumeration", ok});
  }

  {
    bool ok = true;
    for (int t = 0; t < 500 && ok; ++t) {
      const auto a = detail::random_word(rng, 8, "abcd");
      const auto b = detail::random_word(rng, 8, "abcd");
      if (a.empty() && b.empty()) continue;
      const OverlapThreshold gamma(std::uniform_real_distribution<double>(0, 1)(rng));
      const double c = thresholded_overlap(a, b, gamma);
      ok = (c == 0.0 || c >= gamma.value()) && c <= 1.0;
      if (!a.empty()) ok = ok && overlap_rate(a, a) == 1.0;
    }
    results.push_back({"thresholded overlap is 0 or >= gamma", ok});
  }

  {
    bool ok = true;
    const Vocabulary vocab{"start", "started", "starts", "name", "what", "teach"};
    const std::vector<std::string> passage{"teaching", "started", "in", "1794"};
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 300 && ok; ++t) {
      StepOutput step;
      double sum = 0.0;
      for (std::size_t i = 0; i < vocab.size(); ++i) sum += step.distribution.emplace_back(u(rng));
      for (double& p : step.distribution) p /= sum;
      step.attention.assign(passage.size(), 0.0);
      step.attention[std::uniform_int_distribution<std::size_t>(0, passage.size() - 1)(rng)] = 1.0;
      PartialCopyConfig cfg;
      cfg.lambda1 = std::vector<double>{0.5, 1.0, 2.0}[t % 3];
      OverlapCache cache(vocab, cfg);
      const auto adj = adjust_distribution(step, passage, cache);
      const auto& c = cache.rates(passage[aligned_source_position(step.attention)]).values;
      double total = 0.0;
      for (double p : adj) total += p;
      ok = std::abs(total - 1.0) < 1e-9;
      for (std::size_t a = 0; a < vocab.size() && ok; ++a)
        for (std::size_t b = 0; b < vocab.size() && ok; ++b) {
          const double lhs = (adj[a] / adj[b]) / (step.distribution[a] / step.distribution[b]);
          const double rhs = (1 + cfg.lambda1 * c[a]) / (1 + cfg.lambda1 * c[b]);
          ok = std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, rhs);
        }
      cfg.lambda1 = 0.0;
      OverlapCache off(vocab, cfg);
      ok = ok && adjust_distribution(step, passage, off) == step.distribution;
    }
    results.push_back({"partial copy preserves odds ratios and mass", ok});
  }

  {
    bool ok = true;
    for (int t = 0; t < 500 && ok; ++t) {
      const auto a = detail::random_word(rng, 10, "abcdefg ");
      const auto b = detail::random_word(rng, 10, "abcdefg ");
      ok = char_f1(a, b) == char_f1(b, a);
      if (!char_set(a).empty()) ok = ok && char_f1(a, a) == 1.0;
    }
    ok = ok && char_f1("abc", "ab") == 0.8 && char_f1("xyz", "ab") == 0.0;
    results.push_back({"char_f1 symmetry and identity", ok});
  }

  {
    const std::vector<Sentence> corpus{{"when", "did", "teaching", "start", "?"},
                                       {"what", "was", "forbidden", "in", "all", "provinces", "?"}};
    const auto r = corpus_bleu(corpus, corpus);
    bool ok = true;
    for (double b : r.bleu) ok = ok && std::abs(b - 100.0) < 1e-9;
    results.push_back({"corpus BLEU of a corpus against itself is 100", ok});
  }

  return results;
}

} // namespace qgrank
