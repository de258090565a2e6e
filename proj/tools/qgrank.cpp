// qgrank: decode, rerank and evaluate generated questions.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
// violation.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "qgrank/commands.hpp"
#include "qgrank/selfcheck.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct Overrides {
  std::optional<std::string> config;
  std::optional<double> gamma, lambda1, lambda2, smoothing;
  std::optional<std::size_t> beam_size, nbest, max_length, max_span;
  bool no_copy = false, case_fold = false, normalize = false, no_lowercase = false;

  qgrank::RunConfig resolve() const {
    qgrank::RunConfig c = config ? qgrank::RunConfig::load(*config) : qgrank::RunConfig{};
    if (gamma) c.gamma = *gamma;
    if (lambda1) c.lambda1 = *lambda1;
    if (lambda2) c.lambda2 = *lambda2;
    if (smoothing) c.smoothing = *smoothing;
    if (beam_size) c.beam_size = *beam_size;
    if (nbest) c.nbest_size = *nbest;
    if (max_length) c.max_length = *max_length;
    if (max_span) c.oracle_max_span = *max_span;
    if (no_copy) c.partial_copy = false;
    if (case_fold) c.case_fold = true;
    if (normalize) c.normalize_score1 = true;
    if (no_lowercase) c.lowercase = false;
    // A config file may raise beam_size without touching nbest.
    if (!nbest && c.nbest_size > c.beam_size) c.nbest_size = c.beam_size;
    c.validate();
    return c;
  }
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config file; flags override it");
  cmd->add_option("--gamma", o.gamma, "Overlap threshold in [0, 1] (default 0.7)");
  cmd->add_option("--lambda1", o.lambda1, "Partial-copy weight >= 0 (default 1)");
  cmd->add_option("--lambda2", o.lambda2, "QA score weight in [0, 1] (default 0.2)");
  cmd->add_option("--beam-size", o.beam_size, "Beam size (default 20)");
  cmd->add_option("--nbest", o.nbest, "Candidates kept per example (default: beam size)");
  cmd->add_option("--max-length", o.max_length, "Maximum decoded length (default 30)");
  cmd->add_flag("--no-copy", o.no_copy, "Disable the partial-copy adjustment");
  cmd->add_flag("--case-fold", o.case_fold, "Case-fold words before computing overlap");
}

int run(int argc, char** argv) {
  CLI::App app{"Question decoding with partial copy, QA-based reranking and evaluation"};
  app.require_subcommand(0, 1);
  bool seed_check = false;
  app.add_flag("--seed-check", seed_check, "Run the built-in invariant suite and exit");

  Overrides o;

  auto* decode = app.add_subcommand("decode", "Beam-search decode examples into n-best lists");
  std::string examples, model, out;
  std::optional<std::string> vocab, record_trace, write_vocab;
  decode->add_option("--examples", examples, "Examples JSONL")->required();
  decode->add_option("--model", model, "toy:MODEL.json or replay:TRACE.jsonl")->required();
  decode->add_option("--vocab", vocab, "Vocabulary file (one word per line) for replay models");
  decode->add_option("--out", out, "Output n-best JSONL")->required();
  decode->add_option("--record-trace", record_trace, "Also write every model step as a trace");
  decode->add_option("--write-vocab", write_vocab, "Also write the model vocabulary");
  add_common(decode, o);

  auto* rerank = app.add_subcommand("rerank", "Rerank n-best lists with a QA oracle");
  std::string nbest_in, oracle = "toy-span";
  rerank->add_option("--input", nbest_in, "n-best JSONL from decode")->required();
  rerank->add_option("--examples", examples, "Examples JSONL")->required();
  rerank->add_option("--oracle", oracle, "toy-span[:MAX_SPAN] or replay:PREDICTIONS.jsonl");
  rerank->add_option("--out", out, "Output reranked JSONL")->required();
  rerank->add_flag("--normalize-score1", o.normalize, "Length-normalize decoder log-probs");
  rerank->add_option("--max-span", o.max_span, "Default toy-span oracle span length");
  add_common(rerank, o);

  auto* eval = app.add_subcommand("eval", "BLEU and generic-question analyses");
  qgrank::EvalOptions eo;
  std::optional<std::string> json_out;
  eval->add_option("--candidates", eo.candidates, "Candidates (text lines or JSONL)")->required();
  eval->add_option("--references", eo.references, "References (text lines or examples JSONL)")
      ->required();
  eval->add_option("--passages", eo.passages, "Passages; enables the copy-rate section");
  eval->add_option("--templates", eo.templates,
                   "Template file, or 'default' for the built-in generic templates");
  eval->add_option("--before", eo.before, "Pre-rerank candidates; enables the win/loss tally");
  eval->add_option("--max-n", eo.max_n, "Highest BLEU order (1-4)")->check(CLI::Range(1, 4));
  eval->add_option("--json", json_out, "Also write the report as JSON");
  eval->add_flag("--no-lowercase", o.no_lowercase, "Keep case when tokenizing");
  add_common(eval, o);

  auto* train = app.add_subcommand("toy-train", "Build a toy bigram model from examples");
  train->add_option("--examples", examples, "Examples JSONL with reference_question")->required();
  train->add_option("--out", out, "Output model JSON")->required();
  train->add_option("--smoothing", o.smoothing, "Additive smoothing constant (default 0.1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (seed_check) {
    bool all = true;
    for (const auto& r : qgrank::run_self_check()) {
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << '\n';
      all = all && r.passed;
    }
    return all ? kOk : kInternal;
  }

  if (decode->parsed()) {
    const auto config = o.resolve();
    const auto m = qgrank::load_model(model, vocab);
    const auto s = qgrank::cmd_decode(examples, m, config, out, record_trace, write_vocab);
    std::cerr << "decoded " << s.examples << " examples, " << s.candidates << " candidates\n";
  } else if (rerank->parsed()) {
    const auto config = o.resolve();
    const auto orc = qgrank::load_oracle(oracle, config.oracle_max_span);
    const auto s = qgrank::cmd_rerank(nbest_in, examples, orc, config, out);
    std::cout << "examples = " << s.examples << '\n'
              << "top1_changed = " << s.top1_changed << '\n';
  } else if (eval->parsed()) {
    const auto config = o.resolve();
    const auto r = qgrank::cmd_eval(eo, config);
    qgrank::write_report(std::cout, r);
    if (json_out) {
      std::ofstream j(*json_out, std::ios::binary | std::ios::trunc);
      if (!j) throw qgrank::DataError("cannot write " + *json_out);
      j << qgrank::to_json(r).dump(2) << '\n';
    }
  } else if (train->parsed()) {
    const auto config = o.resolve();
    const auto s = qgrank::cmd_toy_train(examples, config.smoothing, out);
    std::cerr << "trained on " << s.questions << " questions, vocabulary " << s.vocab_size << '\n';
  } else {
    std::cout << app.help();
    return kUsage;
  }
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const qgrank::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const qgrank::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const qgrank::InvariantError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}
