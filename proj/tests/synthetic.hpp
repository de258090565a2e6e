#pragma once

// Small synthetic corpora for end-to-end tests.

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "qgrank/io.hpp"
#include "qgrank/model.hpp"

namespace qgrank::testing {

struct SyntheticSet {
  std::vector<CorpusEntry> training;
  std::vector<ExampleRecord> examples;
};

inline std::vector<std::string> words(const std::string& s) { return split_whitespace(s); }

/// The toy model learns "what is it ?" slightly more often than any single
/// "what <verb> <noun> ?". Both have the same length, so neither finishes
/// first and crowds the other out of the beam. Most evaluation passages open with the
/// past form of one of those verbs, so partial copy can tip the choice.
inline SyntheticSet generic_vs_variant_set() {
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"start", "started"}, {"found", "founded"}, {"open", "opened"}, {"form", "formed"},
      {"join", "joined"},   {"print", "printed"}, {"train", "trained"}, {"visit", "visited"},
      {"close", "closed"},  {"build", "built"}};
  const std::vector<std::string> nouns{"school", "river", "church", "bridge", "city"};

  SyntheticSet set;
  for (int k = 0; k < 3; ++k)
    set.training.push_back({words("the archive holds it ."), words("it"),
                            words("what is it ?")});
  for (std::size_t v = 0; v < verbs.size(); ++v) {
    const auto& noun = nouns[v % nouns.size()];
    for (int k = 0; k < 2; ++k)
      set.training.push_back({words(verbs[v].second + " the " + noun + " in 1794 ."),
                              words("1794"), words("what " + verbs[v].first + " " + noun + " ?")});
  }

  for (std::size_t i = 0; i < 50; ++i) {
    const auto& verb = verbs[i % verbs.size()].second;
    const auto& noun = nouns[(i / verbs.size()) % nouns.size()];
    ExampleRecord ex;
    ex.id = "g" + std::to_string(i);
    ex.passage = i % 5 == 4 ? words("in 1794 the " + noun + " was " + verb + " .")
                            : words(verb + " the " + noun + " in 1794 .");
    ex.answer = words("1794");
    set.examples.push_back(std::move(ex));
  }
  return set;
}

/// Every passage opens with its answer year. The toy model slightly prefers
/// the generic "what is the name ?" over "what happened in <year> ?" once
/// the year choice is split three ways. The only passage word the generic
/// question shares is "the", placed far enough from the year that the span
/// oracle's answer to it never includes the year. Every fifth reference is the
/// generic question itself, so reranking can also hurt.
inline SyntheticSet rerank_set() {
  const std::vector<std::string> years{"1794", "1852", "1903"};
  const std::vector<std::string> subjects{"the school opened", "the bridge fell",
                                          "the church burned", "the city grew"};
  SyntheticSet set;
  for (int k = 0; k < 5; ++k)
    set.training.push_back({words("1794 : the archive holds it ."), words("1794"),
                            words("what is the name ?")});
  for (const auto& y : years)
    for (int k = 0; k < 3; ++k)
      set.training.push_back({words(y + " : the school opened ."), words(y),
                              words("what happened in " + y + " ?")});

  for (std::size_t i = 0; i < 40; ++i) {
    const auto& year = years[i % years.size()];
    ExampleRecord ex;
    ex.id = "r" + std::to_string(i);
    ex.passage = words(year + " : records say that " + subjects[i % subjects.size()] + " .");
    ex.answer = words(year);
    ex.reference_question = i % 5 == 4 ? words("what is the name ?")
                                       : words("what happened in " + year + " ?");
    set.examples.push_back(std::move(ex));
  }
  return set;
}

inline void write_examples(const std::string& path, const std::vector<ExampleRecord>& examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& ex : examples) out << to_json(ex).dump() << '\n';
}

} // namespace qgrank::testing
