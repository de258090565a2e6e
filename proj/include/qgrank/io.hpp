#pragma once

// JSONL record formats and run configuration.

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "decode.hpp"
#include "error.hpp"
#include "model.hpp"
#include "rerank.hpp"
#include "vocab.hpp"

namespace qgrank {

struct ExampleRecord {
  std::string id;
  std::vector<std::string> passage;
  std::vector<std::string> answer;
  std::optional<std::vector<std::string>> reference_question;

  DecodeInput decode_input() const { return {id, passage, answer}; }
};

/// Token lists may be given as arrays of strings or a whitespace-joined string.
inline std::vector<std::string> parse_tokens(const nlohmann::json& j, const char* field) {
  if (j.is_string()) return split_whitespace(j.get<std::string>());
  if (!j.is_array()) throw DataError(std::string(field) + " must be a token array or string");
  std::vector<std::string> out;
  for (const auto& t : j) {
    if (!t.is_string()) throw DataError(std::string(field) + " tokens must be strings");
    auto s = t.get<std::string>();
    if (s.empty()) throw DataError(std::string(field) + " contains an empty token");
    out.push_back(std::move(s));
  }
  return out;
}

inline void check_format_version(const nlohmann::json& j) {
  if (j.contains("format_version") && j["format_version"] != kFormatVersion)
    throw DataError("unsupported format_version " + j["format_version"].dump());
}

/// Calls `fn(json, where)` for every non-blank line, turning JSON errors into
/// line-numbered DataErrors.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      check_format_version(j);
      fn(j, where);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const InvariantError&) {
      throw;
    } catch (const DataError& e) {
      const std::string msg = e.what();
      if (msg.rfind(where, 0) == 0) throw;
      throw DataError(where + ": " + msg);
    }
  }
}

inline ExampleRecord parse_example(const nlohmann::json& j) {
  ExampleRecord r;
  r.id = j.at("id").get<std::string>();
  r.passage = parse_tokens(j.at("passage"), "passage");
  r.answer = parse_tokens(j.at("answer"), "answer");
  if (j.contains("reference_question") && !j["reference_question"].is_null())
    r.reference_question = parse_tokens(j["reference_question"], "reference_question");
  if (r.passage.empty()) throw DataError("example '" + r.id + "' has an empty passage");
  if (r.answer.empty()) throw DataError("example '" + r.id + "' has an empty answer");
  return r;
}

inline nlohmann::json to_json(const ExampleRecord& r) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["id"] = r.id;
  j["passage"] = r.passage;
  j["answer"] = r.answer;
  if (r.reference_question) j["reference_question"] = *r.reference_question;
  return j;
}

inline std::vector<ExampleRecord> load_examples(const std::string& path) {
  std::vector<ExampleRecord> out;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](const nlohmann::json& j, const std::string&) {
    auto r = parse_example(j);
    if (!seen.insert(r.id).second) throw DataError("duplicate example id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

struct NBestRecord {
  std::string id;
  std::vector<Candidate> candidates;
};

inline nlohmann::json to_json(const Candidate& c) {
  return {{"tokens", c.tokens},
          {"log_prob", c.log_prob},
          {"aligned_positions", c.aligned_positions},
          {"complete", c.complete}};
}

inline nlohmann::json to_json(const NBestRecord& r) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["id"] = r.id;
  auto cands = nlohmann::json::array();
  for (const auto& c : r.candidates) cands.push_back(to_json(c));
  j["candidates"] = std::move(cands);
  return j;
}

inline Candidate parse_candidate(const nlohmann::json& j) {
  Candidate c;
  c.tokens = parse_tokens(j.at("tokens"), "tokens");
  c.log_prob = j.at("log_prob").get<double>();
  if (!std::isfinite(c.log_prob)) throw DataError("candidate log_prob is not finite");
  if (j.contains("aligned_positions"))
    c.aligned_positions = j["aligned_positions"].get<std::vector<std::size_t>>();
  c.complete = j.value("complete", false);
  return c;
}

inline NBestRecord parse_nbest(const nlohmann::json& j) {
  NBestRecord r;
  r.id = j.at("id").get<std::string>();
  for (const auto& c : j.at("candidates")) r.candidates.push_back(parse_candidate(c));
  return r;
}

inline std::vector<NBestRecord> load_nbest(const std::string& path) {
  std::vector<NBestRecord> out;
  for_each_jsonl(path, [&](const nlohmann::json& j, const std::string&) {
    out.push_back(parse_nbest(j));
  });
  return out;
}

/// All tunables of a run, with their defaults.
struct RunConfig {
  double gamma = 0.7;
  double lambda1 = 1.0;
  double lambda2 = 0.2;
  std::size_t beam_size = 20;
  std::size_t max_length = 30;
  std::size_t nbest_size = 20;
  bool partial_copy = true;
  bool case_fold = false;
  bool normalize_score1 = false;
  bool lowercase = true;
  std::size_t oracle_max_span = 4;
  double smoothing = 0.1;

  void validate() const {
    copy_config().validate();
    beam_config().validate();
    rerank_config().validate();
    if (oracle_max_span == 0) throw ConfigError("oracle max span must be positive");
    if (!(smoothing > 0.0)) throw ConfigError("smoothing must be > 0");
  }

  PartialCopyConfig copy_config() const {
    PartialCopyConfig c;
    c.gamma = OverlapThreshold{gamma};
    c.lambda1 = lambda1;
    c.enabled = partial_copy;
    c.morpho.case_fold = case_fold;
    return c;
  }

  BeamConfig beam_config() const { return {beam_size, max_length, nbest_size}; }

  RerankConfig rerank_config() const { return {lambda2, normalize_score1}; }

  /// Overlays keys present in a JSON config object.
  void merge(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    static const std::set<std::string> known = {
        "format_version", "gamma",     "lambda1",         "lambda2",
        "beam_size",      "max_length", "nbest",          "partial_copy",
        "case_fold",      "normalize_score1", "lowercase", "oracle_max_span",
        "smoothing"};
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    try {
      gamma = j.value("gamma", gamma);
      lambda1 = j.value("lambda1", lambda1);
      lambda2 = j.value("lambda2", lambda2);
      beam_size = j.value("beam_size", beam_size);
      max_length = j.value("max_length", max_length);
      nbest_size = j.value("nbest", nbest_size);
      partial_copy = j.value("partial_copy", partial_copy);
      case_fold = j.value("case_fold", case_fold);
      normalize_score1 = j.value("normalize_score1", normalize_score1);
      lowercase = j.value("lowercase", lowercase);
      oracle_max_span = j.value("oracle_max_span", oracle_max_span);
      smoothing = j.value("smoothing", smoothing);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad config value: ") + e.what());
    }
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    RunConfig c;
    try {
      c.merge(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    return c;
  }
};

} // namespace qgrank
