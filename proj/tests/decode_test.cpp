#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qgrank/decode.hpp"
#include "qgrank/model.hpp"

namespace qgrank {
namespace {

TEST(AlignedSourcePosition, Examples) {
  EXPECT_EQ(aligned_source_position(std::vector<double>{0.1, 0.7, 0.2}), 1u);
  EXPECT_EQ(aligned_source_position(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(aligned_source_position(std::vector<double>{1.0}), 0u);
  EXPECT_THROW(aligned_source_position(std::vector<double>{}), DegenerateInput);
}

// Vocabulary {started, name, start} behind the three markers.
struct StartedFixture : ::testing::Test {
  Vocabulary vocab{"started", "name", "start"};
  std::vector<std::string> passage{"teaching", "started", "in", "1794"};
  StepOutput step{{0.0, 0.0, 0.0, 0.2, 0.5, 0.3}, {0.1, 0.6, 0.2, 0.1}};
};

TEST_F(StartedFixture, WorkedExample) {
  PartialCopyConfig cfg;
  cfg.gamma = OverlapThreshold{0.7};
  cfg.lambda1 = 1.0;
  const auto adj = adjust_distribution(step, passage, vocab, cfg);
  ASSERT_EQ(adj.size(), 6u);
  EXPECT_NEAR(adj[3], 0.27586206896551724, 1e-12);
  EXPECT_NEAR(adj[4], 0.3448275862068965, 1e-12);
  EXPECT_NEAR(adj[5], 0.3793103448275862, 1e-12);
  EXPECT_EQ(adj[0] + adj[1] + adj[2], 0.0);
}

TEST_F(StartedFixture, InactiveMechanismReturnsInputExactly) {
  PartialCopyConfig cfg;
  cfg.lambda1 = 0.0;
  EXPECT_EQ(adjust_distribution(step, passage, vocab, cfg), step.distribution);
  cfg.lambda1 = 2.0;
  cfg.enabled = false;
  EXPECT_EQ(adjust_distribution(step, passage, vocab, cfg), step.distribution);
}

TEST_F(StartedFixture, NoOverlapLeavesDistributionUntouched) {
  step.attention = {0.1, 0.1, 0.7, 0.1};  // aligned to "in"
  PartialCopyConfig cfg;
  EXPECT_EQ(adjust_distribution(step, passage, vocab, cfg), step.distribution);
}

TEST_F(StartedFixture, NegativeLambdaRejected) {
  PartialCopyConfig cfg;
  cfg.lambda1 = -0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AdjustDistribution, MatchesHandDerivationAndOddsRatios) {
  const Vocabulary vocab{"start", "started", "starts", "restart", "name", "what", "did",
                         "teach", "teaching", "taught"};
  const std::vector<std::string> passage{"teaching", "started", "in", "1794", "restarts"};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.001, 1.0);
  const double lambdas[] = {0.5, 1.0, 2.0};
  for (int t = 0; t < 300; ++t) {
    StepOutput step;
    double sum = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) sum += step.distribution.emplace_back(u(rng));
    for (double& p : step.distribution) p /= sum;
    double asum = 0.0;
    for (std::size_t i = 0; i < passage.size(); ++i) asum += step.attention.emplace_back(u(rng));
    for (double& a : step.attention) a /= asum;

    PartialCopyConfig cfg;
    cfg.lambda1 = lambdas[t % 3];
    OverlapCache cache(vocab, cfg);
    const auto adj = adjust_distribution(step, passage, cache);
    const auto hand = testing::adjust_by_hand(step, passage, vocab, 0.7, cfg.lambda1);
    const auto& rates = cache.rates(passage[aligned_source_position(step.attention)]);

    double total = 0.0;
    for (std::size_t i = 0; i < adj.size(); ++i) {
      ASSERT_NEAR(adj[i], hand[i], 1e-12);
      ASSERT_GE(adj[i], 0.0);
      total += adj[i];
      if (rates.values[i] == 0.0 && rates.any_positive) {
        ASSERT_LE(adj[i], step.distribution[i]);
      }
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
    for (std::size_t a = 0; a < adj.size(); ++a)
      for (std::size_t b = 0; b < adj.size(); ++b) {
        const double observed = (adj[a] / adj[b]) / (step.distribution[a] / step.distribution[b]);
        const double expected =
            (1 + cfg.lambda1 * rates.values[a]) / (1 + cfg.lambda1 * rates.values[b]);
        ASSERT_NEAR(observed, expected, 1e-9);
      }
  }
}

TEST(OverlapCache, MarkersNeverBoosted) {
  const Vocabulary vocab{"</s>x"};
  PartialCopyConfig cfg;
  OverlapCache cache(vocab, cfg);
  const auto& r = cache.rates("</s>");
  EXPECT_EQ(r.values[Vocabulary::kEos], 0.0);
  EXPECT_GT(r.values[3], 0.0);
}

// Step distribution that ignores the prefix: "name" 0.5, "started" 0.3,
// end marker 0.2; attention pinned on passage position 1 ("started").
struct FixedModel {
  Vocabulary vocab{"name", "started"};
  StepOutput out{{0.0, 0.2, 0.0, 0.5, 0.3}, {0.0, 1.0, 0.0}};
  struct Session {
    const FixedModel* m;
    StepOutput step(std::span<const TokenId>) const { return m->out; }
  };
  using session_type = Session;
  const Vocabulary& vocabulary() const { return vocab; }
  Session begin_session(const DecodeInput&) const { return {this}; }
};

TEST(BeamSearch, PartialCopyFlipsGenericChoice) {
  FixedModel model;
  const DecodeInput input{"ex", {"teaching", "started", "in"}, {"1794"}};
  BeamConfig greedy{1, 1, 1};
  PartialCopyConfig cfg;
  cfg.lambda1 = 0.0;
  auto nbest = beam_search(model, input, greedy, cfg);
  ASSERT_EQ(nbest.size(), 1u);
  EXPECT_EQ(model.vocab.word(nbest[0].tokens.at(0)), "name");
  cfg.lambda1 = 1.0;
  nbest = beam_search(model, input, greedy, cfg);
  EXPECT_EQ(model.vocab.word(nbest[0].tokens.at(0)), "started");
  EXPECT_NEAR(nbest[0].log_prob, std::log(0.6 / 1.3), 1e-12);
  EXPECT_EQ(nbest[0].aligned_positions, std::vector<std::size_t>{1});
  EXPECT_FALSE(nbest[0].complete);
}

TEST(BeamSearch, BeamOfOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const testing::RandomTableModel model(Vocabulary{"a", "b", "c", "d"}, 3, seed);
    const DecodeInput input{"x", {"a", "bb", "cd"}, {"a"}};
    for (double lambda : {0.0, 1.0}) {
      PartialCopyConfig cfg;
      cfg.gamma = OverlapThreshold{0.5};
      cfg.lambda1 = lambda;
      const auto nbest = beam_search(model, input, BeamConfig{1, 6, 1}, cfg);
      ASSERT_EQ(nbest.size(), 1u);

      // Hand-rolled greedy decoder.
      OverlapCache cache(model.vocabulary(), cfg);
      TokenSequence prefix{Vocabulary::kBos};
      double lp = 0.0;
      bool done = false;
      while (!done && prefix.size() - 1 < 6) {
        const auto probs = adjust_distribution(model.table(prefix), input.passage, cache);
        const auto best = static_cast<TokenId>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        lp += std::log(probs[best]);
        if (best == Vocabulary::kEos) done = true;
        else prefix.push_back(best);
      }
      EXPECT_EQ(nbest[0].tokens, TokenSequence(prefix.begin() + 1, prefix.end()));
      EXPECT_EQ(nbest[0].complete, done);
      EXPECT_DOUBLE_EQ(nbest[0].log_prob, lp);
    }
  }
}

TEST(BeamSearch, ZeroLambdaKeepsUnadjustedArgmax) {
  const testing::RandomTableModel model(Vocabulary{"start", "started", "name"}, 2, 99);
  const DecodeInput input{"x", {"started", "name"}, {"a"}};
  PartialCopyConfig off;
  off.enabled = false;
  PartialCopyConfig zero;
  zero.lambda1 = 0.0;
  const BeamConfig beam{1, 8, 1};
  EXPECT_EQ(beam_search(model, input, beam, off), beam_search(model, input, beam, zero));
}

TEST(BeamSearch, MatchesExhaustiveEnumeration) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const testing::RandomTableModel model(Vocabulary{"ab", "abc"}, 2, seed, 0.1);
    const DecodeInput input{"x", {"abc", "zz"}, {"q"}};
    for (bool enabled : {false, true}) {
      PartialCopyConfig cfg;
      cfg.enabled = enabled;
      cfg.gamma = OverlapThreshold{0.7};
      const BeamConfig beam{625, 4, 1};
      const auto nbest = beam_search(model, input, beam, cfg);
      OverlapCache cache(model.vocabulary(), cfg);
      const auto all = testing::enumerate_sequences(
          [&](const TokenSequence& p) {
            return testing::adjust_by_hand(model.table(p), input.passage, model.vocabulary(),
                                           0.7, enabled ? cfg.lambda1 : 0.0);
          },
          model.vocabulary().size(), 4);
      const auto best = testing::exhaustive_best(all, 1);
      ASSERT_EQ(nbest.size(), 1u);
      EXPECT_EQ(nbest[0].tokens, best.tokens) << "seed " << seed;
      EXPECT_EQ(nbest[0].complete, best.complete);
      EXPECT_NEAR(nbest[0].log_prob, best.log_prob, 1e-9);
    }
  }
}

TEST(BeamSearch, NBestShapeInvariants) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const testing::RandomTableModel model(Vocabulary{"a", "b", "c", "d", "e"}, 4, seed);
    const DecodeInput input{"x", {"a", "b", "cc", "dd"}, {"a"}};
    const BeamConfig beam{5, 5, 3};
    const auto nbest = beam_search(model, input, beam, PartialCopyConfig{});
    ASSERT_LE(nbest.size(), beam.nbest_size);
    ASSERT_FALSE(nbest.empty());
    for (std::size_t i = 0; i < nbest.size(); ++i) {
      const auto& h = nbest[i];
      if (i) {
        ASSERT_GE(nbest[i - 1].log_prob, h.log_prob);
      }
      ASSERT_LE(h.log_prob, 0.0);
      ASSERT_TRUE(h.complete || h.tokens.size() == beam.max_length);
      ASSERT_EQ(h.aligned_positions.size(), h.tokens.size());
      for (auto t : h.tokens) {
        ASSERT_NE(t, Vocabulary::kBos);
        ASSERT_NE(t, Vocabulary::kEos);
      }
    }
  }
}

TEST(BeamSearch, FillsWithTruncatedWhenNothingFinishes) {
  // End marker has zero probability, so only length-truncated hypotheses exist.
  struct NoEnd {
    Vocabulary vocab{"a", "b"};
    struct Session {
      StepOutput step(std::span<const TokenId>) const {
        return {{0.0, 0.0, 0.0, 0.6, 0.4}, {1.0}};
      }
    };
    using session_type = Session;
    const Vocabulary& vocabulary() const { return vocab; }
    Session begin_session(const DecodeInput&) const { return {}; }
  } model;
  const auto nbest =
      beam_search(model, DecodeInput{"x", {"p"}, {"a"}}, BeamConfig{4, 2, 3}, PartialCopyConfig{});
  ASSERT_EQ(nbest.size(), 3u);
  for (const auto& h : nbest) {
    EXPECT_FALSE(h.complete);
    EXPECT_EQ(h.tokens.size(), 2u);
  }
  EXPECT_NEAR(nbest[0].log_prob, 2 * std::log(0.6), 1e-12);
}

TEST(BeamSearch, TraceMissNamesPrefix) {
  Vocabulary vocab{"a"};
  DecodingTrace trace;
  const ReplayModel model(vocab, trace);
  try {
    beam_search(model, DecodeInput{"ex9", {"p"}, {"a"}}, BeamConfig{2, 3, 1}, PartialCopyConfig{});
    FAIL() << "expected a trace miss";
  } catch (const TraceMiss& e) {
    EXPECT_NE(std::string(e.what()).find("ex9"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[0:<s>]"), std::string::npos);
  }
}

TEST(BeamConfig, Validation) {
  EXPECT_THROW((BeamConfig{0, 5, 1}.validate()), ConfigError);
  EXPECT_THROW((BeamConfig{2, 0, 1}.validate()), ConfigError);
  EXPECT_THROW((BeamConfig{2, 5, 3}.validate()), ConfigError);
  EXPECT_NO_THROW((BeamConfig{20, 30, 20}.validate()));
}

} // namespace
} // namespace qgrank
