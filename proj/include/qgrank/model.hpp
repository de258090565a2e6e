#pragma once

// Generator models usable with beam_search: trace replay, a smoothed bigram
// toy model, and a recorder that captures any model's steps as a trace.

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "decode.hpp"
#include "error.hpp"
#include "vocab.hpp"

namespace qgrank {

inline constexpr int kFormatVersion = 1;

/// Recorded decoder steps keyed by (example id, exact token-id prefix).
class DecodingTrace {
public:
  using Key = std::pair<std::string, TokenSequence>;

  /// Returns false if the key was already present (the entry is left as is).
  bool insert(std::string id, TokenSequence prefix, StepOutput step) {
    return entries_.emplace(Key{std::move(id), std::move(prefix)}, std::move(step)).second;
  }

  const StepOutput* find(const std::string& id, std::span<const TokenId> prefix) const {
    auto it = entries_.find(Key{id, TokenSequence(prefix.begin(), prefix.end())});
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<Key, StepOutput>& entries() const { return entries_; }

private:
  std::map<Key, StepOutput> entries_;
};

inline std::string describe_prefix(std::span<const TokenId> prefix, const Vocabulary* vocab) {
  std::string s = "[";
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(prefix[i]);
    if (vocab && prefix[i] < vocab->size()) s += ":" + vocab->word(prefix[i]);
  }
  return s + "]";
}

/// Recorded step for (example_id, prefix); TraceMiss if the path was never
/// explored when the trace was made.
inline const StepOutput& replay_step(const DecodingTrace& trace, const std::string& example_id,
                                     std::span<const TokenId> prefix,
                                     const Vocabulary* vocab = nullptr) {
  if (const StepOutput* s = trace.find(example_id, prefix)) return *s;
  throw TraceMiss("trace miss for example '" + example_id + "' at prefix " +
                  describe_prefix(prefix, vocab));
}

namespace detail {

inline std::vector<double> parse_weights(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string(what) + " must be an array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw DataError(std::string(what) + " must be an array of numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline std::vector<double> parse_distribution(const nlohmann::json& j, std::size_t vocab_size) {
  if (j.is_array()) return parse_weights(j, "dist");
  if (!j.is_object() || !j.contains("sparse"))
    throw DataError("dist must be an array or {\"sparse\": {...}, \"rest_uniform\": bool}");
  std::vector<double> dist(vocab_size, 0.0);
  std::vector<bool> listed(vocab_size, false);
  double listed_mass = 0.0;
  for (const auto& [key, value] : j.at("sparse").items()) {
    std::size_t pos = 0;
    unsigned long id = 0;
    try {
      id = std::stoul(key, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != key.size() || key.empty())
      throw DataError("sparse dist key '" + key + "' is not a token id");
    if (id >= vocab_size)
      throw DataError("sparse dist token id " + key + " out of vocabulary range");
    if (!value.is_number()) throw DataError("sparse dist values must be numbers");
    dist[id] = value.get<double>();
    listed[id] = true;
    listed_mass += dist[id];
  }
  const bool rest_uniform = j.value("rest_uniform", false);
  const auto unlisted = static_cast<std::size_t>(std::count(listed.begin(), listed.end(), false));
  if (rest_uniform && unlisted > 0) {
    const double share = std::max(0.0, 1.0 - listed_mass) / static_cast<double>(unlisted);
    for (std::size_t i = 0; i < vocab_size; ++i)
      if (!listed[i]) dist[i] = share;
  }
  return dist;
}

} // namespace detail

/// Reads a trace JSONL stream. Each line is
///   {"id", "prefix": [ids], "dist": [...] | {"sparse": {...}, "rest_uniform": b},
///    "attention": [...]}
/// Distributions must sum to one within 1e-4; attention likewise.
inline DecodingTrace load_trace(std::istream& in, const Vocabulary& vocab,
                                const std::string& source = "trace") {
  DecodingTrace trace;
  std::map<std::string, std::size_t> attention_length;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": parse error: " + e.what());
    }
    try {
      const auto id = j.at("id").get<std::string>();
      TokenSequence prefix;
      for (const auto& t : j.at("prefix")) {
        const auto v = t.get<long long>();
        if (v < 0 || static_cast<std::size_t>(v) >= vocab.size())
          throw DataError(where + ": prefix token id " + std::to_string(v) + " out of range");
        prefix.push_back(static_cast<TokenId>(v));
      }
      StepOutput step{detail::parse_distribution(j.at("dist"), vocab.size()),
                      detail::parse_weights(j.at("attention"), "attention")};
      const std::string entry = where + " (id '" + id + "', prefix " +
                                describe_prefix(prefix, nullptr) + ")";
      validate_step(step, vocab.size(), step.attention.size(), 1e-4, entry);
      if (step.attention.empty()) throw DataError(entry + ": empty attention");
      auto [it, fresh] = attention_length.emplace(id, step.attention.size());
      if (!fresh && it->second != step.attention.size())
        throw DataError(entry + ": attention length differs from earlier entries");
      if (!trace.insert(id, prefix, std::move(step)))
        throw DataError(entry + ": duplicate trace entry");
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return trace;
}

inline DecodingTrace load_trace(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace file " + path);
  return load_trace(in, vocab, path);
}

/// Writes the trace in dense form, ordered by (id, prefix).
inline void write_trace(std::ostream& out, const DecodingTrace& trace) {
  for (const auto& [key, step] : trace.entries()) {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["id"] = key.first;
    j["prefix"] = key.second;
    j["dist"] = step.distribution;
    j["attention"] = step.attention;
    out << j.dump() << '\n';
  }
}

/// Replays a recorded trace. Immutable and shareable across sessions.
class ReplayModel {
public:
  ReplayModel(Vocabulary vocab, DecodingTrace trace)
      : vocab_(std::make_shared<const Vocabulary>(std::move(vocab))),
        trace_(std::make_shared<const DecodingTrace>(std::move(trace))) {}

  class Session {
  public:
    StepOutput step(std::span<const TokenId> prefix) {
      return replay_step(*trace_, id_, prefix, vocab_);
    }

  private:
    friend class ReplayModel;
    Session(const DecodingTrace* trace, const Vocabulary* vocab, std::string id)
        : trace_(trace), vocab_(vocab), id_(std::move(id)) {}
    const DecodingTrace* trace_;
    const Vocabulary* vocab_;
    std::string id_;
  };
  using session_type = Session;

  const Vocabulary& vocabulary() const { return *vocab_; }
  Session begin_session(const DecodeInput& input) const {
    return Session(trace_.get(), vocab_.get(), input.id);
  }
  const DecodingTrace& trace() const { return *trace_; }

private:
  std::shared_ptr<const Vocabulary> vocab_;
  std::shared_ptr<const DecodingTrace> trace_;
};

/// (passage, answer, question) triple used to fit the toy model.
struct CorpusEntry {
  std::vector<std::string> passage;
  std::vector<std::string> answer;
  std::vector<std::string> question;
};

/// Smoothed bigram model over questions, conditioned only on the previous
/// token. Attention is uniform over passage positions holding the previous
/// token, or uniform over the whole passage when there is none. The start
/// marker is never predicted.
class ToyModel {
public:
  ToyModel(Vocabulary vocab, std::map<std::pair<TokenId, TokenId>, double> bigrams,
           double smoothing)
      : vocab_(std::move(vocab)), smoothing_(smoothing), bigrams_(std::move(bigrams)) {
    if (!(smoothing_ > 0.0)) throw ConfigError("toy model smoothing must be > 0");
    rows_.assign(vocab_.size(), {});
    totals_.assign(vocab_.size(), 0.0);
    for (const auto& [key, count] : bigrams_) {
      if (key.first >= vocab_.size() || key.second >= vocab_.size())
        throw DataError("toy model bigram token id out of range");
      if (key.second == Vocabulary::kBos)
        throw DataError("toy model bigram predicts the start marker");
      if (!(count >= 0.0)) throw DataError("toy model bigram counts must be >= 0");
      rows_[key.first].emplace_back(key.second, count);
      totals_[key.first] += count;
    }
  }

  class Session {
  public:
    StepOutput step(std::span<const TokenId> prefix) const {
      if (prefix.empty()) throw DataError("toy model: empty prefix");
      return model_->step_for(prefix.back(), *passage_);
    }

  private:
    friend class ToyModel;
    Session(const ToyModel* model, const std::vector<std::string>* passage)
        : model_(model), passage_(passage) {}
    const ToyModel* model_;
    const std::vector<std::string>* passage_;
  };
  using session_type = Session;

  const Vocabulary& vocabulary() const { return vocab_; }

  /// The session borrows `input.passage`; the input must outlive it.
  Session begin_session(const DecodeInput& input) const {
    return Session(this, &input.passage);
  }

  StepOutput step_for(TokenId prev, const std::vector<std::string>& passage) const {
    if (prev >= vocab_.size()) throw DataError("toy model: token id out of range");
    const std::size_t n = vocab_.size();
    const double denom = totals_[prev] + smoothing_ * static_cast<double>(n - 1);
    StepOutput out;
    out.distribution.assign(n, smoothing_ / denom);
    out.distribution[Vocabulary::kBos] = 0.0;
    for (const auto& [next, count] : rows_[prev])
      out.distribution[next] = (count + smoothing_) / denom;

    out.attention.assign(passage.size(), 0.0);
    std::size_t matches = 0;
    if (prev != Vocabulary::kBos) {
      const std::string& word = vocab_.word(prev);
      for (std::size_t i = 0; i < passage.size(); ++i)
        if (passage[i] == word) {
          out.attention[i] = 1.0;
          ++matches;
        }
    }
    if (matches == 0) {
      std::fill(out.attention.begin(), out.attention.end(), 1.0);
      matches = passage.size();
    }
    for (double& a : out.attention) a /= static_cast<double>(matches);
    return out;
  }

  double smoothing() const { return smoothing_; }
  const std::map<std::pair<TokenId, TokenId>, double>& bigrams() const { return bigrams_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "toy-bigram";
    j["smoothing"] = smoothing_;
    j["vocab"] = std::vector<std::string>(vocab_.words().begin() + 3, vocab_.words().end());
    auto rows = nlohmann::json::array();
    for (const auto& [key, count] : bigrams_) rows.push_back({key.first, key.second, count});
    j["bigrams"] = std::move(rows);
    return j;
  }

  static ToyModel from_json(const nlohmann::json& j) {
    try {
      if (j.value("kind", std::string{}) != "toy-bigram")
        throw DataError("model file is not a toy-bigram model");
      const auto words = j.at("vocab").get<std::vector<std::string>>();
      Vocabulary vocab = Vocabulary::from_words(words);
      std::map<std::pair<TokenId, TokenId>, double> bigrams;
      for (const auto& row : j.at("bigrams")) {
        const auto a = row.at(0).get<long long>();
        const auto b = row.at(1).get<long long>();
        if (a < 0 || b < 0) throw DataError("toy model bigram token id out of range");
        bigrams[{static_cast<TokenId>(a), static_cast<TokenId>(b)}] = row.at(2).get<double>();
      }
      return ToyModel(std::move(vocab), std::move(bigrams), j.at("smoothing").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed toy model: ") + e.what());
    }
  }

  static ToyModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ": " + e.what());
    }
    return from_json(j);
  }

private:
  Vocabulary vocab_;
  double smoothing_;
  std::map<std::pair<TokenId, TokenId>, double> bigrams_;
  std::vector<std::vector<std::pair<TokenId, double>>> rows_;
  std::vector<double> totals_;
};

/// Fits the toy model. The vocabulary holds every corpus token in order of
/// first appearance; bigrams run over <s> question </s>.
inline ToyModel build_toy_model(std::span<const CorpusEntry> corpus, double smoothing) {
  if (corpus.empty()) throw DataError("build_toy_model: empty corpus");
  Vocabulary vocab;
  for (const auto& e : corpus) {
    for (const auto& w : e.passage) vocab.add(w);
    for (const auto& w : e.answer) vocab.add(w);
    for (const auto& w : e.question) vocab.add(w);
  }
  std::map<std::pair<TokenId, TokenId>, double> bigrams;
  for (const auto& e : corpus) {
    TokenId prev = Vocabulary::kBos;
    for (const auto& w : e.question) {
      const TokenId cur = vocab.id(w);
      bigrams[{prev, cur}] += 1.0;
      prev = cur;
    }
    bigrams[{prev, Vocabulary::kEos}] += 1.0;
  }
  return ToyModel(std::move(vocab), std::move(bigrams), smoothing);
}

/// Wraps a model and records every step it serves into a trace.
template <generator_model Model>
class RecordingModel {
public:
  RecordingModel(const Model& inner, DecodingTrace& sink) : inner_(&inner), sink_(&sink) {}

  class Session {
  public:
    StepOutput step(std::span<const TokenId> prefix) {
      StepOutput out = inner_.step(prefix);
      sink_->insert(id_, TokenSequence(prefix.begin(), prefix.end()), out);
      return out;
    }

  private:
    friend class RecordingModel;
    Session(typename Model::session_type inner, DecodingTrace* sink, std::string id)
        : inner_(std::move(inner)), sink_(sink), id_(std::move(id)) {}
    typename Model::session_type inner_;
    DecodingTrace* sink_;
    std::string id_;
  };
  using session_type = Session;

  const Vocabulary& vocabulary() const { return inner_->vocabulary(); }
  Session begin_session(const DecodeInput& input) const {
    return Session(inner_->begin_session(input), sink_, input.id);
  }

private:
  const Model* inner_;
  DecodingTrace* sink_;
};

} // namespace qgrank
