#pragma once

// Batch commands behind the qgrank executable. Each reads and writes files
// and is deterministic for fixed inputs and configuration.

#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "decode.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "io.hpp"
#include "model.hpp"
#include "rerank.hpp"

namespace qgrank {

namespace detail {

inline std::pair<std::string, std::string> split_source(const std::string& spec,
                                                        const char* what) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return {spec, {}};
  if (colon == 0) throw ConfigError(std::string("malformed ") + what + " '" + spec + "'");
  return {spec.substr(0, colon), spec.substr(colon + 1)};
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

} // namespace detail

using AnyModel = std::variant<ToyModel, ReplayModel>;

/// "toy:MODEL.json" or "replay:TRACE.jsonl" (the latter needs a vocabulary).
inline AnyModel load_model(const std::string& spec, const std::optional<std::string>& vocab_path) {
  const auto [kind, path] = detail::split_source(spec, "model");
  if (path.empty()) throw ConfigError("--model needs the form toy:PATH or replay:PATH");
  if (kind == "toy") return ToyModel::load(path);
  if (kind == "replay") {
    if (!vocab_path) throw ConfigError("replay models need --vocab");
    Vocabulary vocab = Vocabulary::load(*vocab_path);
    DecodingTrace trace = load_trace(path, vocab);
    return ReplayModel(std::move(vocab), std::move(trace));
  }
  throw ConfigError("unknown model kind '" + kind + "' (expected toy or replay)");
}

using AnyOracle = std::variant<ToySpanOracle, ReplayQAOracle>;

/// "toy-span", "toy-span:MAX_SPAN" or "replay:PREDICTIONS.jsonl".
inline AnyOracle load_oracle(const std::string& spec, std::size_t default_span) {
  const auto [kind, arg] = detail::split_source(spec, "oracle");
  if (kind == "toy-span") {
    ToySpanOracle o{default_span};
    if (!arg.empty()) {
      try {
        std::size_t pos = 0;
        const long v = std::stol(arg, &pos);
        if (pos != arg.size() || v <= 0) throw std::invalid_argument(arg);
        o.max_span = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw ConfigError("toy-span max span must be a positive integer, got '" + arg + "'");
      }
    }
    return o;
  }
  if (kind == "replay") {
    if (arg.empty()) throw ConfigError("--oracle replay needs a file: replay:PATH");
    return ReplayQAOracle::load(arg);
  }
  throw ConfigError("unknown oracle kind '" + kind + "' (expected toy-span or replay)");
}

struct DecodeSummary {
  std::size_t examples = 0;
  std::size_t candidates = 0;
};

/// Decodes every example into an n-best record, optionally recording every
/// model step into a trace file that `replay:` can consume later.
inline DecodeSummary cmd_decode(const std::string& examples_path, const AnyModel& model,
                                const RunConfig& config, const std::string& out_path,
                                const std::optional<std::string>& trace_out = std::nullopt,
                                const std::optional<std::string>& vocab_out = std::nullopt) {
  config.validate();
  const auto examples = load_examples(examples_path);
  const BeamConfig beam = config.beam_config();
  const PartialCopyConfig copy = config.copy_config();

  DecodingTrace recorded;
  std::ostringstream buffer;
  DecodeSummary summary;
  std::visit(
      [&](const auto& m) {
        for (const auto& ex : examples) {
          const DecodeInput input = ex.decode_input();
          NBestList nbest;
          if (trace_out) {
            RecordingModel recorder(m, recorded);
            nbest = beam_search(recorder, input, beam, copy);
          } else {
            nbest = beam_search(m, input, beam, copy);
          }
          NBestRecord rec{ex.id, to_candidates(nbest, m.vocabulary())};
          summary.candidates += rec.candidates.size();
          buffer << to_json(rec).dump() << '\n';
          ++summary.examples;
        }
      },
      model);

  auto out = detail::open_output(out_path);
  out << buffer.str();
  if (trace_out) {
    auto t = detail::open_output(*trace_out);
    write_trace(t, recorded);
  }
  if (vocab_out) std::visit([&](const auto& m) { m.vocabulary().save(*vocab_out); }, model);
  return summary;
}

struct RerankSummary {
  std::size_t examples = 0;
  std::size_t top1_changed = 0;
};

inline nlohmann::json to_json(const RerankedCandidate& r) {
  nlohmann::json j = to_json(r.candidate);
  j["question"] = r.candidate.question();
  j["predicted_answer"] = r.predicted_answer;
  j["score1"] = r.score.score1;
  j["score2"] = r.score.score2;
  j["combined"] = r.score.combined;
  j["old_rank"] = r.old_rank;
  j["new_rank"] = r.new_rank;
  return j;
}

/// Reranks every n-best record against its example's answer. Output records
/// list candidates in their new order.
inline RerankSummary cmd_rerank(const std::string& nbest_path, const std::string& examples_path,
                                const AnyOracle& oracle, const RunConfig& config,
                                const std::string& out_path) {
  config.validate();
  const RerankConfig rc = config.rerank_config();
  std::map<std::string, ExampleRecord> by_id;
  for (auto& ex : load_examples(examples_path)) by_id.emplace(ex.id, std::move(ex));
  const auto nbest = load_nbest(nbest_path);

  std::ostringstream buffer;
  RerankSummary summary;
  for (const auto& rec : nbest) {
    auto it = by_id.find(rec.id);
    if (it == by_id.end())
      throw DataError("n-best id '" + rec.id + "' not found in " + examples_path);
    const ExampleRecord& ex = it->second;
    const std::string gold = join(ex.answer);
    const auto ranked = std::visit(
        [&](const auto& o) { return rerank(rec.candidates, rec.id, ex.passage, gold, o, rc); },
        oracle);
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["id"] = rec.id;
    j["lambda2"] = rc.lambda2;
    const bool changed = ranked.front().old_rank != 0;
    j["top1_changed"] = changed;
    auto cands = nlohmann::json::array();
    for (const auto& r : ranked) cands.push_back(to_json(r));
    j["candidates"] = std::move(cands);
    buffer << j.dump() << '\n';
    ++summary.examples;
    summary.top1_changed += changed ? 1 : 0;
  }
  auto out = detail::open_output(out_path);
  out << buffer.str();
  return summary;
}

struct ToyTrainSummary {
  std::size_t questions = 0;
  std::size_t vocab_size = 0;
};

/// Fits the bigram toy model on examples carrying reference questions.
inline ToyTrainSummary cmd_toy_train(const std::string& examples_path, double smoothing,
                                     const std::string& out_path) {
  std::vector<CorpusEntry> corpus;
  for (const auto& ex : load_examples(examples_path)) {
    if (!ex.reference_question)
      throw DataError("example '" + ex.id + "' lacks reference_question");
    corpus.push_back({ex.passage, ex.answer, *ex.reference_question});
  }
  const ToyModel model = build_toy_model(corpus, smoothing);
  auto out = detail::open_output(out_path);
  out << model.to_json().dump() << '\n';
  return {corpus.size(), model.vocabulary().size()};
}

/// A tokenized sentence read from any of the accepted file shapes, with the
/// record id when the source had one.
struct LoadedSentence {
  std::optional<std::string> id;
  Sentence tokens;
};

enum class SentenceField { kQuestion, kReference, kPassage };

/// Reads one sentence per line. Plain text lines are whitespace-tokenized.
/// JSONL lines may be n-best/reranked records (first candidate), records with
/// "question", or example records ("reference_question" / "passage").
inline std::vector<LoadedSentence> load_sentences(const std::string& path, SentenceField field,
                                                  bool lowercase) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<LoadedSentence> out;
  std::string line;
  std::size_t line_no = 0;
  auto lower = [&](Sentence s) {
    if (lowercase)
      for (auto& t : s) t = lowercase_utf8(t);
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] != '{') {
      if (first == std::string::npos && field != SentenceField::kPassage) {
        out.push_back({std::nullopt, {}});
        continue;
      }
      out.push_back({std::nullopt, lower(split_whitespace(line))});
      continue;
    }
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      check_format_version(j);
      LoadedSentence s;
      if (j.contains("id")) s.id = j["id"].get<std::string>();
      if (field == SentenceField::kPassage) {
        s.tokens = parse_tokens(j.at("passage"), "passage");
      } else if (j.contains("candidates")) {
        const auto& c = j["candidates"];
        if (c.empty()) throw DataError("record has no candidates");
        s.tokens = parse_tokens(c.at(0).at("tokens"), "tokens");
      } else if (j.contains("question")) {
        s.tokens = parse_tokens(j["question"], "question");
      } else if (j.contains("reference_question")) {
        s.tokens = parse_tokens(j["reference_question"], "reference_question");
      } else {
        throw DataError("record has no candidates, question or reference_question field");
      }
      s.tokens = lower(std::move(s.tokens));
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const InvariantError&) {
      throw;
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  // A trailing newline yields no extra line, but trailing blank lines would.
  while (!out.empty() && !out.back().id && out.back().tokens.empty()) out.pop_back();
  return out;
}

namespace detail {

inline std::vector<Sentence> aligned_tokens(const std::vector<LoadedSentence>& ref,
                                            const std::vector<LoadedSentence>& other,
                                            const std::string& ref_name,
                                            const std::string& other_name) {
  if (ref.size() != other.size())
    throw DataError("misaligned inputs: " + ref_name + " has " + std::to_string(ref.size()) +
                    " lines, " + other_name + " has " + std::to_string(other.size()));
  std::vector<Sentence> out;
  out.reserve(other.size());
  for (std::size_t i = 0; i < other.size(); ++i) {
    if (ref[i].id && other[i].id && *ref[i].id != *other[i].id)
      throw DataError("misaligned inputs at record " + std::to_string(i + 1) + ": id '" +
                      *ref[i].id + "' in " + ref_name + " vs '" + *other[i].id + "' in " +
                      other_name);
    out.push_back(other[i].tokens);
  }
  return out;
}

inline std::vector<Sentence> tokens_of(const std::vector<LoadedSentence>& v) {
  std::vector<Sentence> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(s.tokens);
  return out;
}

} // namespace detail

struct EvalOptions {
  std::string candidates;
  std::string references;
  std::optional<std::string> passages;
  /// Path to a pattern file, or "default" for the built-in templates.
  std::optional<std::string> templates;
  /// Pre-rerank candidates; enables the win/loss tally.
  std::optional<std::string> before;
  int max_n = kMaxBleuOrder;
};

struct EvalResult {
  BleuReport bleu;
  std::optional<std::vector<TemplateCount>> templates;
  std::optional<CopyRateReport> copy;
  std::optional<RerankDelta> delta;
};

inline EvalResult cmd_eval(const EvalOptions& opts, const RunConfig& config) {
  config.validate();
  const auto cands = load_sentences(opts.candidates, SentenceField::kQuestion, config.lowercase);
  const auto refs = load_sentences(opts.references, SentenceField::kReference, config.lowercase);
  const auto candidates = detail::tokens_of(cands);
  const auto references = detail::aligned_tokens(cands, refs, opts.candidates, opts.references);

  EvalResult r;
  r.bleu = corpus_bleu(candidates, references, opts.max_n);
  if (opts.templates) {
    const auto patterns =
        *opts.templates == "default" ? default_templates() : load_templates(*opts.templates);
    r.templates = count_templates(candidates, patterns);
  }
  if (opts.passages) {
    const auto pass = load_sentences(*opts.passages, SentenceField::kPassage, config.lowercase);
    const auto passages = detail::aligned_tokens(cands, pass, opts.candidates, *opts.passages);
    MorphoOptions mo;
    mo.case_fold = config.case_fold;
    // copy_rate needs a non-empty question; empty candidates count as zero.
    CopyRateReport report;
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double v = candidates[i].empty()
                           ? 0.0
                           : copy_rate(candidates[i], passages[i], OverlapThreshold{config.gamma}, mo);
      report.per_question.push_back(v);
      sum += v;
    }
    report.mean = candidates.empty() ? 0.0 : sum / static_cast<double>(candidates.size());
    r.copy = std::move(report);
  }
  if (opts.before) {
    const auto before = load_sentences(*opts.before, SentenceField::kQuestion, config.lowercase);
    const auto before_tokens = detail::aligned_tokens(cands, before, opts.candidates, *opts.before);
    r.delta = rerank_delta(before_tokens, candidates, references);
  }
  return r;
}

inline nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  nlohmann::json b;
  for (int n = 0; n < r.bleu.max_n; ++n) {
    b["bleu_" + std::to_string(n + 1)] = r.bleu.bleu[n];
  }
  b["precisions"] =
      std::vector<double>(r.bleu.precisions.begin(), r.bleu.precisions.begin() + r.bleu.max_n);
  b["brevity_penalty"] = r.bleu.brevity_penalty;
  b["candidate_count"] = r.bleu.candidate_count;
  b["candidate_length"] = r.bleu.stats.candidate_length;
  b["reference_length"] = r.bleu.stats.reference_length;
  j["bleu"] = std::move(b);
  if (r.templates) {
    auto arr = nlohmann::json::array();
    for (const auto& t : *r.templates) {
      nlohmann::json e;
      e["pattern"] = t.pattern;
      if (!t.slot_values.empty()) e["slots"] = t.slot_values;
      e["counts"] = t.counts;
      e["total"] = t.total();
      arr.push_back(std::move(e));
    }
    j["templates"] = std::move(arr);
  }
  if (r.copy) j["copy_rate"] = {{"mean", r.copy->mean}, {"per_question", r.copy->per_question}};
  if (r.delta)
    j["rerank_delta"] = {{"improved", r.delta->improved},
                         {"worsened", r.delta->worsened},
                         {"unchanged", r.delta->unchanged}};
  return j;
}

/// key = value lines.
inline void write_report(std::ostream& out, const EvalResult& r) {
  auto num = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(4);
    s << v;
    return s.str();
  };
  for (int n = 0; n < r.bleu.max_n; ++n)
    out << "bleu_" << n + 1 << " = " << num(r.bleu.bleu[n]) << '\n';
  for (int n = 0; n < r.bleu.max_n; ++n)
    out << "precision_" << n + 1 << " = " << num(r.bleu.precisions[n]) << '\n';
  out << "brevity_penalty = " << num(r.bleu.brevity_penalty) << '\n';
  out << "candidate_count = " << r.bleu.candidate_count << '\n';
  if (r.templates) {
    for (const auto& t : *r.templates) {
      out << "template \"" << t.pattern << "\" = ";
      for (std::size_t i = 0; i < t.counts.size(); ++i) out << (i ? "/" : "") << t.counts[i];
      out << '\n';
    }
  }
  if (r.copy) out << "copy_rate_mean = " << num(r.copy->mean) << '\n';
  if (r.delta) {
    out << "rerank_improved = " << r.delta->improved << '\n';
    out << "rerank_worsened = " << r.delta->worsened << '\n';
    out << "rerank_unchanged = " << r.delta->unchanged << '\n';
  }
}

} // namespace qgrank
