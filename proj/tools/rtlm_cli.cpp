// Copyright 2026 The rtlm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Links only the public C API.

#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "rtlm/rtlm.h"

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(rtlm_status s, const std::string& what) {
  if (s != RTLM_OK)
    throw Failure(what + ": " + rtlm_status_string(s) + ": " + rtlm_last_error());
}

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

struct ConfigHandle {
  rtlm_config* ptr = nullptr;
  ConfigHandle() = default;
  ConfigHandle(ConfigHandle&& other) noexcept : ptr(std::exchange(other.ptr, nullptr)) {}
  ConfigHandle(const ConfigHandle&) = delete;
  ConfigHandle& operator=(const ConfigHandle&) = delete;
  ~ConfigHandle() { rtlm_config_free(ptr); }
};

struct ModelHandles {
  std::vector<rtlm_model*> ptrs;
  ModelHandles() = default;
  ModelHandles(ModelHandles&& other) noexcept : ptrs(std::exchange(other.ptrs, {})) {}
  ModelHandles& operator=(ModelHandles&& other) noexcept {
    std::swap(ptrs, other.ptrs);
    return *this;
  }
  ModelHandles(const ModelHandles&) = delete;
  ModelHandles& operator=(const ModelHandles&) = delete;
  ~ModelHandles() {
    for (auto* m : ptrs) rtlm_model_free(m);
  }
};

// Flags shared by the pipeline subcommands; each maps onto a config key.
struct Options {
  std::string config;
  std::optional<std::string> arch, seed, nbest, out, interp_weight, lm_scale, history_mode,
      lstm_blocks, corpus, train_corpus;
  std::vector<std::string> checkpoints, names, sets;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config file (key = value)");
  cmd->add_option("--arch", o.arch,
                  "tlm, tlm_xl, rtlm_d, rtlm_f, rtlm_d_xl, rtlm_f_xl or lstm_lm");
  cmd->add_option("--seed", o.seed, "seed for every random choice");
  cmd->add_option("--lstm-blocks", o.lstm_blocks, "comma list of 0-based LSTM block indices");
  cmd->add_option("--set", o.sets, "extra key=value override (repeatable)");
}

void add_scoring(CLI::App* cmd, Options& o) {
  cmd->add_option("--nbest", o.nbest, "N-best file (JSON lines)");
  cmd->add_option("--interp-weight", o.interp_weight, "weight of the first model");
  cmd->add_option("--lm-scale", o.lm_scale, "LM scale in am + scale * lm");
  cmd->add_option("--history-mode", o.history_mode, "rescored or original")
      ->check(CLI::IsMember({"rescored", "original"}));
}

ConfigHandle make_config(const Options& o) {
  ConfigHandle cfg;
  if (!o.config.empty()) {
    check(rtlm_config_load(o.config.c_str(), &cfg.ptr), "loading " + o.config);
  } else {
    check(rtlm_config_create(&cfg.ptr), "creating config");
  }
  auto set = [&](const char* key, const std::optional<std::string>& v) {
    if (v) check(rtlm_config_set(cfg.ptr, key, v->c_str()), std::string("--") + key);
  };
  set("arch", o.arch);
  set("seed", o.seed);
  set("nbest", o.nbest);
  set("out", o.out);
  set("interp_weight", o.interp_weight);
  set("lm_scale", o.lm_scale);
  set("history_mode", o.history_mode);
  set("lstm_blocks", o.lstm_blocks);
  set("train_corpus", o.train_corpus);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure("--set expects key=value, got '" + kv + "'");
    check(rtlm_config_set(cfg.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()),
          "--set " + kv);
  }
  check(rtlm_config_validate(cfg.ptr), "config");
  return cfg;
}

std::optional<std::string> config_value(const ConfigHandle& cfg, const char* key) {
  char buf[4096];
  int found = 0;
  check(rtlm_config_get(cfg.ptr, key, buf, sizeof buf, &found), "reading config");
  if (!found) return std::nullopt;
  return std::string(buf);
}

ModelHandles load_models(const std::vector<std::string>& paths) {
  ModelHandles models;
  for (const auto& p : paths) {
    rtlm_model* m = nullptr;
    check(rtlm_model_load(p.c_str(), &m), "loading " + p);
    models.ptrs.push_back(m);
  }
  return models;
}

int run_train(Options& o) {
  auto cfg = make_config(o);
  if (!o.checkpoints.empty()) {
    check(rtlm_config_set(cfg.ptr, "checkpoint", o.checkpoints.front().c_str()), "--checkpoint");
  } else if (!config_value(cfg, "checkpoint")) {
    const std::string arch = config_value(cfg, "arch").value_or("tlm");
    check(rtlm_config_set(cfg.ptr, "checkpoint", (arch + ".ckpt").c_str()), "checkpoint");
  }
  if (o.out) check(rtlm_config_set(cfg.ptr, "loss_csv", o.out->c_str()), "--out");
  rtlm_train_summary summary{};
  check(rtlm_train(cfg.ptr, print_line, nullptr, &summary), "train");
  std::printf("trained %zu steps over %zu epochs, final loss %.6f\n", summary.steps,
              summary.epochs, summary.final_loss);
  return 0;
}

int run_eval(Options& o) {
  auto cfg = make_config(o);
  ModelHandles models;
  if (!o.checkpoints.empty()) {
    models = load_models({o.checkpoints.front()});
  } else {
    rtlm_model* m = nullptr;
    check(rtlm_model_create(cfg.ptr, &m), "creating model");
    models.ptrs.push_back(m);
  }
  std::string corpus;
  if (o.corpus) {
    corpus = *o.corpus;
  } else if (auto v = config_value(cfg, "valid_corpus")) {
    corpus = *v;
  } else {
    throw Failure("eval-ppl needs --corpus or valid_corpus in the config");
  }
  double ppl = 0.0;
  size_t tokens = 0;
  check(rtlm_eval_ppl(cfg.ptr, models.ptrs.front(), corpus.c_str(), &ppl, &tokens), "eval-ppl");
  rtlm_model_info info{};
  check(rtlm_model_info_get(models.ptrs.front(), &info), "model info");
  std::printf("ppl %.6f over %zu tokens (vocab %zu)\n", ppl, tokens, info.vocab_size);
  return 0;
}

int run_rescore(Options& o) {
  auto cfg = make_config(o);
  if (o.checkpoints.empty() || o.checkpoints.size() > 2)
    throw Failure("rescore takes one or two --checkpoint values");
  auto models = load_models(o.checkpoints);
  rtlm_rescore_summary s{};
  check(rtlm_rescore(cfg.ptr, models.ptrs.data(), models.ptrs.size(), &s), "rescore");
  std::printf("%zu utterances in %zu conversations: WER %.4f (%zu / %zu), oracle WER %.4f\n",
              s.utterances, s.conversations, s.wer, s.errors, s.ref_words, s.oracle_wer);
  return 0;
}

int run_analyze(Options& o) {
  auto cfg = make_config(o);
  if (o.checkpoints.empty()) throw Failure("analyze needs at least one --checkpoint");
  if (!o.names.empty() && o.names.size() != o.checkpoints.size())
    throw Failure("give one --name per --checkpoint");
  auto models = load_models(o.checkpoints);
  std::vector<const char*> names;
  for (std::size_t i = 0; i < o.checkpoints.size(); ++i)
    names.push_back(o.names.empty() ? o.checkpoints[i].c_str() : o.names[i].c_str());
  check(rtlm_analyze(cfg.ptr, models.ptrs.data(), names.data(), models.ptrs.size(), print_line,
                     nullptr),
        "analyze");
  return 0;
}

int run_mpsswe(const std::string& a, const std::string& b) {
  rtlm_mpsswe_result r{};
  check(rtlm_mpsswe_files(a.c_str(), b.c_str(), &r), "mpsswe");
  std::printf("segments %zu mean_difference %.6f z %.6f p %.6g significant %s\n", r.segments,
              r.mean_difference, r.z, r.p_value, r.significant ? "yes" : "no");
  return 0;
}

int run_self_test(std::uint64_t seed) {
  int failures = 0;
  check(rtlm_self_test(seed, print_line, nullptr, &failures), "self-test");
  std::printf("%s: %d failure(s)\n", failures == 0 ? "self-test passed" : "self-test failed",
              failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-model training, perplexity evaluation and N-best rescoring", "rtlm"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint + loss CSV");
  add_common(train, o);
  train->add_option("--checkpoint", o.checkpoints, "output checkpoint path");
  train->add_option("--out", o.out, "loss CSV path");
  train->add_option("--corpus", o.train_corpus, "training corpus");

  auto* eval = app.add_subcommand("eval-ppl", "perplexity of a corpus");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoints, "model checkpoint (default: fresh model)");
  eval->add_option("--corpus", o.corpus, "corpus to score (default: valid_corpus)");

  auto* rescore = app.add_subcommand("rescore", "rescore N-best lists");
  add_common(rescore, o);
  add_scoring(rescore, o);
  rescore->add_option("--checkpoint", o.checkpoints, "one or two model checkpoints");
  rescore->add_option("--out", o.out, "selections TSV");

  auto* analyze = app.add_subcommand("analyze", "LM scores on error-prone words");
  add_common(analyze, o);
  add_scoring(analyze, o);
  analyze->add_option("--checkpoint", o.checkpoints, "checkpoints, baseline first");
  analyze->add_option("--name", o.names, "display name per checkpoint");
  analyze->add_option("--train-corpus", o.train_corpus, "corpus for occurrence counts");
  analyze->add_option("--out", o.out, "report TSV");

  std::string sel_a, sel_b;
  auto* mps = app.add_subcommand("mpsswe", "matched-pairs significance test of two selections");
  mps->add_option("a", sel_a, "selections TSV of system A")->required();
  mps->add_option("b", sel_b, "selections TSV of system B")->required();

  std::uint64_t test_seed = 1;
  auto* self = app.add_subcommand("self-test", "gradient checks and oracles");
  self->add_option("--seed", test_seed, "first seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "rtlm: %s\nRun with --help for usage.\n", e.what());
    return 2;
  }

  try {
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*rescore) return run_rescore(o);
    if (*analyze) return run_analyze(o);
    if (*mps) return run_mpsswe(sel_a, sel_b);
    if (*self) return run_self_test(test_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rtlm: %s\n", e.what());
    return 1;
  }
  return 2;
}
