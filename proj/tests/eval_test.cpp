#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qgrank/eval.hpp"

namespace qgrank {
namespace {

Sentence tok(const std::string& s) { return split_whitespace(s); }

TEST(CorpusBleu, SelfIsHundredAtEveryOrder) {
  const std::vector<Sentence> corpus{tok("when did teaching start ?"),
                                     tok("what was forbidden in all provinces ?"),
                                     tok("who amalgamated with massey university ?")};
  const auto r = corpus_bleu(corpus, corpus);
  for (double b : r.bleu) EXPECT_NEAR(b, 100.0, 1e-9);
  EXPECT_EQ(r.brevity_penalty, 1.0);
  EXPECT_EQ(r.candidate_count, 3u);
}

TEST(CorpusBleu, ClippedUnigramPrecision) {
  const std::vector<Sentence> c{tok("the the the")}, r{tok("the cat")};
  const auto rep = corpus_bleu(c, r, 1);
  EXPECT_NEAR(rep.precisions[0], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(rep.brevity_penalty, 1.0);
  EXPECT_NEAR(rep.bleu[0], 100.0 / 3.0, 1e-9);
  EXPECT_EQ(rep.bleu[1], 0.0);
}

TEST(CorpusBleu, BrevityPenalty) {
  const std::vector<Sentence> c{tok("when did teaching start")},
      r{tok("when did teaching start ?")};
  const auto rep = corpus_bleu(c, r);
  EXPECT_NEAR(rep.brevity_penalty, 0.7788007830714049, 1e-15);
  EXPECT_NEAR(rep.bleu[3], 100.0 * 0.7788007830714049, 1e-9);
}

TEST(CorpusBleu, ZeroOrderZeroesHigherOrders) {
  const std::vector<Sentence> c{tok("a b a b")}, r{tok("a a b b")};
  const auto rep = corpus_bleu(c, r);
  // bigrams: ab ba ab vs aa ab bb -> 1 clipped match; trigrams: none.
  EXPECT_NEAR(rep.precisions[1], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(rep.precisions[2], 0.0);
  EXPECT_GT(rep.bleu[1], 0.0);
  EXPECT_EQ(rep.bleu[2], 0.0);
  EXPECT_EQ(rep.bleu[3], 0.0);
}

TEST(CorpusBleu, Errors) {
  const std::vector<Sentence> one{tok("a")}, none;
  EXPECT_THROW(corpus_bleu(none, none), DataError);
  EXPECT_THROW(corpus_bleu(one, none), DataError);
  EXPECT_THROW(corpus_bleu(one, one, 5), ConfigError);
}

TEST(CorpusBleu, PermutationInvariant) {
  std::mt19937_64 rng(41);
  const std::vector<std::string> words{"what", "is", "the", "name", "of", "river", "?"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(1, 8);
  std::vector<Sentence> c(20), r(20);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i].resize(len(rng));
    r[i].resize(len(rng));
    for (auto& w : c[i]) w = words[pick(rng)];
    for (auto& w : r[i]) w = words[pick(rng)];
  }
  const auto base = corpus_bleu(c, r);
  std::vector<std::size_t> order(c.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Sentence> c2, r2;
  for (auto i : order) {
    c2.push_back(c[i]);
    r2.push_back(r[i]);
  }
  const auto perm = corpus_bleu(c2, r2);
  EXPECT_EQ(base.bleu, perm.bleu);
}

TEST(SentenceBleu4, IdentityAndDisjoint) {
  EXPECT_GE(sentence_bleu4(tok("when did teaching start ?"), tok("when did teaching start ?")), 0.99);
  EXPECT_LT(sentence_bleu4(tok("a b c d"), tok("w x y z")), 0.05);
  EXPECT_EQ(sentence_bleu4(tok(""), tok("a b")), 0.0);
}

TEST(SentenceBleu4, OneSubstitution) {
  // p1 = 5/6, p2 = 4/6, p3 = 2/5, p4 = 1/4 after add-one on orders 2-4.
  const double expected = std::pow(5.0 / 6 * 4.0 / 6 * 2.0 / 5 * 1.0 / 4, 0.25);
  EXPECT_NEAR(expected, 0.48549177170732344, 1e-15);
  EXPECT_NEAR(sentence_bleu4(tok("what did the city found in"), tok("what did the town found in")),
              expected, 1e-12);
}

TEST(Templates, DefaultPatterns) {
  const auto patterns = default_templates();
  ASSERT_EQ(patterns.size(), 5u);
  const std::vector<Sentence> qs{tok("what is the name of the river ?"),
                                 tok("who amalgamated with massey university ?"),
                                 tok("what was the name of the school ?"),
                                 tok("what type of church was it ?"),
                                 tok("what was another name for the city ?"),
                                 tok("what is it called ?"),
                                 tok("what is the total area ?")};
  const auto counts = count_templates(qs, patterns);
  EXPECT_EQ(counts[0].counts, (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(counts[0].slot_values, (std::vector<std::string>{"is", "was"}));
  EXPECT_EQ(counts[1].counts, (std::vector<std::size_t>{1}));
  EXPECT_EQ(counts[2].counts, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(counts[3].counts, (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(counts[4].counts, (std::vector<std::size_t>{1, 0}));
}

TEST(Templates, NonGenericQuestionMatchesNothing) {
  const std::vector<Sentence> qs{tok("who amalgamated with massey university ?")};
  for (const auto& c : count_templates(qs, default_templates())) EXPECT_EQ(c.total(), 0u);
}

TEST(Templates, CountsAcrossCorpus) {
  const std::vector<Sentence> qs{tok("what is the name of x ?"), tok("when did it start ?"),
                                 tok("what was the name of y ?")};
  const auto c = count_templates(qs, default_templates());
  EXPECT_EQ(c[0].total(), 2u);
  // Pure function: identical on a second pass.
  EXPECT_EQ(count_templates(qs, default_templates())[0].counts, c[0].counts);
}

TEST(Templates, ParseRules) {
  const auto exact = TemplatePattern::parse("who is he");
  EXPECT_TRUE(exact.match(tok("who is he")));
  EXPECT_FALSE(exact.match(tok("who is he ?")));
  const auto prefix = TemplatePattern::parse("What Is/Was it ...?");
  EXPECT_EQ(prefix.match(tok("what was it")), std::optional<std::size_t>(1));
  EXPECT_FALSE(prefix.match(tok("what were it")));
  EXPECT_THROW(TemplatePattern::parse("..."), DataError);
  EXPECT_THROW(TemplatePattern::parse("a/b c/d"), DataError);
  EXPECT_THROW(TemplatePattern::parse("a//b"), DataError);
}

TEST(CopyRate, Examples) {
  const OverlapThreshold gamma{0.7};
  EXPECT_EQ(copy_rate(tok("when did teaching start ?"), tok("teaching started in 1794 ."), gamma),
            0.5);
  EXPECT_EQ(copy_rate(tok("teaching started"), tok("teaching started in 1794 ."), gamma), 1.0);
  EXPECT_EQ(copy_rate(tok("xyz qq"), tok("abc def"), gamma), 0.0);
  EXPECT_EQ(copy_rate(tok("? ."), tok("? ."), gamma), 0.0);
  EXPECT_THROW(copy_rate(tok(""), tok("a"), gamma), DegenerateInput);
}

TEST(CopyRate, MonotoneInGamma) {
  std::mt19937_64 rng(43);
  const std::vector<std::string> words{"start", "started", "starts", "teach", "teaching",
                                       "name", "named", "what", "?", "river"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(1, 6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    Sentence q(len(rng)), p(len(rng));
    for (auto& w : q) w = words[pick(rng)];
    for (auto& w : p) w = words[pick(rng)];
    double g1 = u(rng), g2 = u(rng);
    if (g1 > g2) std::swap(g1, g2);
    const double lo = copy_rate(q, p, OverlapThreshold{g1});
    const double hi = copy_rate(q, p, OverlapThreshold{g2});
    ASSERT_LE(hi, lo);
    ASSERT_GE(hi, 0.0);
    ASSERT_LE(lo, 1.0);
  }
}

TEST(CopyRate, Punctuation) {
  EXPECT_TRUE(is_punctuation_token("?"));
  EXPECT_TRUE(is_punctuation_token("``"));
  EXPECT_TRUE(is_punctuation_token("''"));
  EXPECT_TRUE(is_punctuation_token("—"));
  EXPECT_FALSE(is_punctuation_token("1794"));
  EXPECT_FALSE(is_punctuation_token("u.s."));
  EXPECT_FALSE(is_punctuation_token(""));
}

TEST(RerankDelta, Cases) {
  const std::vector<Sentence> refs{tok("what was forbidden in all provinces ?"),
                                   tok("when did teaching start ?"),
                                   tok("who amalgamated with massey university ?")};
  EXPECT_EQ(rerank_delta(refs, refs, refs), (RerankDelta{0, 0, 3}));
  const std::vector<Sentence> junk{tok("x y z"), tok("x y z"), tok("x y z")};
  EXPECT_EQ(rerank_delta(junk, refs, refs), (RerankDelta{3, 0, 0}));
  EXPECT_EQ(rerank_delta(refs, junk, refs), (RerankDelta{0, 3, 0}));

  const std::vector<Sentence> before{tok("what was the name of the church ?"), refs[1],
                                     tok("who is massey ?")};
  const std::vector<Sentence> after{refs[0], tok("when did it start ?"), tok("who is massey ?")};
  RerankDelta expected;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double b = sentence_bleu4(before[i], refs[i]), a = sentence_bleu4(after[i], refs[i]);
    (a > b ? expected.improved : a < b ? expected.worsened : expected.unchanged)++;
  }
  EXPECT_EQ(expected, (RerankDelta{1, 1, 1}));
  EXPECT_EQ(rerank_delta(before, after, refs), expected);
  EXPECT_THROW(rerank_delta(before, after, std::span(junk).subspan(0, 2)), DataError);
}

} // namespace
} // namespace qgrank
