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

#include "rtlm/rtlm.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/corpus.hpp"
#include "core/errors.hpp"
#include "core/model.hpp"
#include "core/parallel.hpp"
#include "core/rescoring.hpp"
#include "core/selftest.hpp"
#include "core/strings.hpp"
#include "core/training.hpp"

struct rtlm_config {
  rtlm::ExperimentConfig settings;
};

struct rtlm_model {
  rtlm::lm::Model model;
  rtlm::text::Vocab vocab;
};

namespace {

std::string& last_error() {
  thread_local std::string message;
  return message;
}

template <typename F>
rtlm_status guard(F&& body) {
  try {
    body();
    return RTLM_OK;
  } catch (const rtlm::Error& e) {
    last_error() = e.what();
    return static_cast<rtlm_status>(e.code());
  } catch (const std::bad_alloc&) {
    last_error() = "out of memory";
    return RTLM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error() = e.what();
    return RTLM_ERR_INTERNAL;
  } catch (...) {
    last_error() = "unknown failure";
    return RTLM_ERR_INTERNAL;
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw rtlm::Error(rtlm::ErrorCode::kInvalidArgument, what);
}

void emit(rtlm_log_fn log, void* user, const std::string& line) {
  if (log) log(line.c_str(), user);
}

std::string vocab_path(const std::string& checkpoint) { return checkpoint + ".vocab"; }

std::vector<rtlm::text::Document> prepare_documents(std::vector<rtlm::text::Document> docs,
                                                    const rtlm::Experiment& e) {
  if (e.context_mode == rtlm::ContextMode::kUtterance) return rtlm::text::split_utterances(docs);
  return docs;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::vector<rtlm::scoring::ScoringModel> scoring_models(const rtlm_model* const* models,
                                                         std::size_t n) {
  require(models != nullptr && n > 0, "at least one model is required");
  std::vector<rtlm::scoring::ScoringModel> out;
  for (std::size_t i = 0; i < n; ++i) {
    require(models[i] != nullptr, "model handle " + std::to_string(i) + " is null");
    out.push_back({&models[i]->model, &models[i]->vocab, "model" + std::to_string(i)});
  }
  return out;
}

std::vector<std::string> lowered(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(rtlm::to_lower(w));
  return out;
}

}  // namespace

extern "C" {

const char* rtlm_version(void) { return "1.0.0"; }

const char* rtlm_status_string(rtlm_status status) {
  switch (status) {
    case RTLM_OK: return "ok";
    case RTLM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case RTLM_ERR_SHAPE: return "shape error";
    case RTLM_ERR_INDEX: return "index error";
    case RTLM_ERR_NUMERIC: return "numeric error";
    case RTLM_ERR_CONTRACT: return "contract error";
    case RTLM_ERR_PARSE: return "parse error";
    case RTLM_ERR_IO: return "i/o error";
    case RTLM_ERR_UNDEFINED_RESULT: return "undefined result";
    case RTLM_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* rtlm_last_error(void) { return last_error().c_str(); }

rtlm_status rtlm_config_create(rtlm_config** out) {
  return guard([&] {
    require(out != nullptr, "rtlm_config_create: null output");
    *out = new rtlm_config();
  });
}

rtlm_status rtlm_config_load(const char* path, rtlm_config** out) {
  return guard([&] {
    require(path != nullptr && out != nullptr, "rtlm_config_load: null argument");
    auto cfg = std::make_unique<rtlm_config>();
    cfg->settings = rtlm::ExperimentConfig::load(path);
    *out = cfg.release();
  });
}

rtlm_status rtlm_config_set(rtlm_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config != nullptr && key != nullptr && value != nullptr,
            "rtlm_config_set: null argument");
    config->settings.set(key, value);
  });
}

rtlm_status rtlm_config_get(const rtlm_config* config, const char* key, char* buf, size_t cap,
                            int* found) {
  return guard([&] {
    require(config != nullptr && key != nullptr && found != nullptr,
            "rtlm_config_get: null argument");
    const auto value = config->settings.get(key);
    *found = value ? 1 : 0;
    if (value && buf != nullptr && cap > 0) {
      const std::size_t n = std::min(cap - 1, value->size());
      std::memcpy(buf, value->data(), n);
      buf[n] = '\0';
    }
  });
}

rtlm_status rtlm_config_validate(const rtlm_config* config) {
  return guard([&] {
    require(config != nullptr, "rtlm_config_validate: null config");
    config->settings.resolve().model.validate();
  });
}

void rtlm_config_free(rtlm_config* config) { delete config; }

rtlm_status rtlm_model_create(const rtlm_config* config, rtlm_model** out) {
  return guard([&] {
    require(config != nullptr && out != nullptr, "rtlm_model_create: null argument");
    const auto e = config->settings.resolve();
    require(!e.train_corpus.empty(), "rtlm_model_create: train_corpus is not set");
    auto m = std::make_unique<rtlm_model>();
    m->vocab = rtlm::text::build_vocab(rtlm::text::read_corpus(e.train_corpus), e.min_count);
    m->model.config = e.model;
    m->model.config.vocab_size = m->vocab.size();
    m->model.params = rtlm::lm::init_parameters(m->model.config, e.seed, e.init);
    *out = m.release();
  });
}

rtlm_status rtlm_model_load(const char* checkpoint, rtlm_model** out) {
  return guard([&] {
    require(checkpoint != nullptr && out != nullptr, "rtlm_model_load: null argument");
    auto m = std::make_unique<rtlm_model>();
    m->model = rtlm::lm::load_checkpoint(checkpoint);
    m->vocab = rtlm::text::load_vocab(vocab_path(checkpoint));
    if (m->vocab.size() != m->model.config.vocab_size)
      throw rtlm::ContractError("checkpoint '" + std::string(checkpoint) + "' expects " +
                                std::to_string(m->model.config.vocab_size) +
                                " vocabulary entries, vocabulary file has " +
                                std::to_string(m->vocab.size()));
    *out = m.release();
  });
}

rtlm_status rtlm_model_save(const rtlm_model* model, const char* checkpoint) {
  return guard([&] {
    require(model != nullptr && checkpoint != nullptr, "rtlm_model_save: null argument");
    rtlm::lm::save_checkpoint(checkpoint, model->model.config, model->model.params);
    rtlm::text::save_vocab(vocab_path(checkpoint), model->vocab);
  });
}

rtlm_status rtlm_model_info_get(const rtlm_model* model, rtlm_model_info* out) {
  return guard([&] {
    require(model != nullptr && out != nullptr, "rtlm_model_info_get: null argument");
    const auto& cfg = model->model.config;
    *out = rtlm_model_info{};
    const std::string arch = rtlm::lm::to_string(cfg.arch);
    std::strncpy(out->arch, arch.c_str(), sizeof(out->arch) - 1);
    out->vocab_size = cfg.vocab_size;
    out->n_blocks = cfg.n_blocks;
    out->d_model = cfg.d_model;
    out->n_heads = cfg.n_heads;
    out->segment_len = cfg.segment_len;
    out->parameter_count = rtlm::lm::parameter_count(model->model.params);
  });
}

rtlm_status rtlm_model_score(const rtlm_model* model, const char* context, const char* target,
                             double* out_log_probs, size_t capacity, size_t* written) {
  return guard([&] {
    require(model != nullptr && context != nullptr && target != nullptr && written != nullptr,
            "rtlm_model_score: null argument");
    auto ctx = model->vocab.encode(lowered(rtlm::split_whitespace(context)));
    if (!ctx.empty()) ctx.push_back(rtlm::lm::kEosId);
    auto tgt = model->vocab.encode(lowered(rtlm::split_whitespace(target)));
    tgt.push_back(rtlm::lm::kEosId);
    require(out_log_probs != nullptr && capacity >= tgt.size(),
            "rtlm_model_score: output needs room for " + std::to_string(tgt.size()) + " values");
    const auto& cfg = model->model.config;
    const auto scores = rtlm::lm::score_tokens(cfg, model->model.params, ctx, tgt,
                                               rtlm::lm::init_state(cfg));
    std::copy(scores.log_probs.begin(), scores.log_probs.end(), out_log_probs);
    *written = scores.log_probs.size();
  });
}

void rtlm_model_free(rtlm_model* model) { delete model; }

rtlm_status rtlm_train(const rtlm_config* config, rtlm_log_fn log, void* user,
                       rtlm_train_summary* out) {
  return guard([&] {
    require(config != nullptr, "rtlm_train: null config");
    const auto e = config->settings.resolve();
    require(!e.train_corpus.empty(), "rtlm_train: train_corpus is not set");
    require(!e.checkpoint.empty(), "rtlm_train: checkpoint is not set");

    const auto train_docs = rtlm::text::read_corpus(e.train_corpus);
    rtlm_model m;
    m.vocab = rtlm::text::build_vocab(train_docs, e.min_count);
    m.model.config = e.model;
    m.model.config.vocab_size = m.vocab.size();
    m.model.config.validate();
    m.model.params = rtlm::lm::init_parameters(m.model.config, e.seed, e.init);
    const auto& cfg = m.model.config;
    emit(log, user,
         "arch " + rtlm::lm::to_string(cfg.arch) + ", vocab " + std::to_string(cfg.vocab_size) +
             ", parameters " + std::to_string(rtlm::lm::parameter_count(m.model.params)));

    const auto streams = rtlm::text::make_streams(prepare_documents(train_docs, e), m.vocab,
                                                  cfg.segment_len, e.insert_eos);
    const auto result = rtlm::lm::train(
        cfg, m.model.params, streams, e.train, [&](const rtlm::lm::LossRecord& r) {
          emit(log, user,
               "epoch " + std::to_string(r.epoch) + " step " + std::to_string(r.step) +
                   " loss " + format_double(r.loss) + " ppl " + format_double(r.ppl));
        });

    double valid_ppl = std::numeric_limits<double>::quiet_NaN();
    if (!e.valid_corpus.empty()) {
      const auto valid = rtlm::text::make_streams(
          prepare_documents(rtlm::text::read_corpus(e.valid_corpus), e), m.vocab,
          cfg.segment_len, e.insert_eos);
      valid_ppl = rtlm::lm::evaluate_ppl(cfg, m.model.params, valid, rtlm::thread_budget());
      emit(log, user, "valid ppl " + format_double(valid_ppl));
    }

    rtlm::lm::save_checkpoint(e.checkpoint, cfg, m.model.params);
    rtlm::text::save_vocab(vocab_path(e.checkpoint), m.vocab);
    const std::string loss_csv = e.loss_csv.empty() ? e.checkpoint + ".loss.csv" : e.loss_csv;
    rtlm::lm::write_loss_csv(loss_csv, result.log);
    emit(log, user, "wrote " + e.checkpoint + " and " + loss_csv);

    if (out != nullptr) {
      out->steps = result.steps;
      out->epochs = result.epoch_loss.size();
      out->final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
      out->valid_ppl = valid_ppl;
    }
  });
}

rtlm_status rtlm_eval_ppl(const rtlm_config* config, const rtlm_model* model, const char* corpus,
                          double* out_ppl, size_t* out_tokens) {
  return guard([&] {
    require(config != nullptr && model != nullptr && corpus != nullptr && out_ppl != nullptr,
            "rtlm_eval_ppl: null argument");
    const auto e = config->settings.resolve();
    const auto& cfg = model->model.config;
    const auto streams =
        rtlm::text::make_streams(prepare_documents(rtlm::text::read_corpus(corpus), e),
                                 model->vocab, cfg.segment_len, e.insert_eos);
    require(!streams.empty(), "rtlm_eval_ppl: corpus has no documents");
    const auto totals =
        rtlm::lm::evaluate_nll(cfg, model->model.params, streams, rtlm::thread_budget());
    if (totals.tokens == 0) throw rtlm::ContractError("rtlm_eval_ppl: no scored tokens");
    *out_ppl = std::exp(totals.nll / static_cast<double>(totals.tokens));
    if (out_tokens != nullptr) *out_tokens = totals.tokens;
  });
}

rtlm_status rtlm_rescore(const rtlm_config* config, const rtlm_model* const* models,
                         size_t n_models, rtlm_rescore_summary* out) {
  return guard([&] {
    require(config != nullptr, "rtlm_rescore: null config");
    const auto e = config->settings.resolve();
    require(!e.nbest.empty(), "rtlm_rescore: nbest is not set");
    const auto lists = rtlm::scoring::read_nbest(e.nbest);
    const auto scorers = scoring_models(models, n_models);
    const auto results = rtlm::scoring::rescore(lists, scorers, e.rescore, rtlm::thread_budget());
    if (!e.out.empty()) rtlm::scoring::write_selections(e.out, results);
    if (out != nullptr) {
      const auto wer = rtlm::scoring::corpus_wer(results);
      std::size_t oracle = 0;
      for (const auto& r : results) oracle += r.oracle_errors;
      *out = rtlm_rescore_summary{};
      out->utterances = results.size();
      out->conversations = rtlm::scoring::group_conversations(lists).size();
      out->errors = wer.errors;
      out->ref_words = wer.ref_words;
      out->wer = wer.wer();
      out->oracle_wer =
          wer.ref_words ? static_cast<double>(oracle) / static_cast<double>(wer.ref_words) : 0.0;
    }
  });
}

rtlm_status rtlm_analyze(const rtlm_config* config, const rtlm_model* const* models,
                         const char* const* names, size_t n_models, rtlm_log_fn log,
                         void* user) {
  return guard([&] {
    require(config != nullptr, "rtlm_analyze: null config");
    const auto e = config->settings.resolve();
    require(!e.nbest.empty(), "rtlm_analyze: nbest is not set");
    require(!e.train_corpus.empty(), "rtlm_analyze: train_corpus is not set");
    require(!e.out.empty(), "rtlm_analyze: out is not set");
    const auto lists = rtlm::scoring::read_nbest(e.nbest);
    auto scorers = scoring_models(models, n_models);
    const auto counts = rtlm::text::word_counts(rtlm::text::read_corpus(e.train_corpus));
    const std::size_t threads = rtlm::thread_budget();

    const auto baseline_results =
        rtlm::scoring::rescore(lists, std::span(scorers).first(1), e.rescore, threads);
    std::vector<std::vector<std::string>> refs, recognized;
    for (std::size_t u = 0; u < lists.size(); ++u) {
      refs.push_back(lowered(lists[u].reference));
      recognized.push_back(lowered(lists[u].hyps[baseline_results[u].selected].words));
    }
    std::vector<rtlm::scoring::SystemWordScores> systems;
    for (std::size_t k = 0; k < scorers.size(); ++k) {
      const std::string name =
          names != nullptr && names[k] != nullptr ? names[k] : "model" + std::to_string(k);
      const auto lp = rtlm::scoring::reference_log_probs(lists, std::span(scorers).subspan(k, 1),
                                                         e.rescore, threads);
      rtlm::scoring::SystemWordScores s{name, {}};
      for (std::size_t u = 0; u < lists.size(); ++u) {
        std::vector<double> nlp;
        for (std::size_t t = 0; t < refs[u].size(); ++t) nlp.push_back(-lp[u][t]);
        s.neg_log_probs.push_back(std::move(nlp));
      }
      systems.push_back(std::move(s));
    }
    const auto report = rtlm::scoring::error_prone_analysis(refs, recognized, systems, counts);

    std::ofstream os(e.out);
    if (!os) throw rtlm::IoError("cannot write report '" + e.out + "'");
    os << "system\terror_prone_score\taverage_occurrences\twords_counted\n";
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : "NA"; };
    for (const auto& row : report.rows) {
      os << row.system << '\t' << opt(row.error_prone_score) << '\t'
         << opt(row.average_occurrences) << '\t' << row.words_counted << '\n';
      emit(log, user,
           row.system + ": error-prone score " + opt(row.error_prone_score) +
               ", average occurrences " + opt(row.average_occurrences));
    }
    emit(log, user,
         std::to_string(report.error_prone_words.size()) + " error-prone words, " +
             std::to_string(report.error_prone_tokens) + " tokens");
  });
}

rtlm_status rtlm_mpsswe(const double* errors_a, const double* errors_b, size_t n,
                        rtlm_mpsswe_result* out) {
  return guard([&] {
    require(out != nullptr && (n == 0 || (errors_a != nullptr && errors_b != nullptr)),
            "rtlm_mpsswe: null argument");
    const auto r = rtlm::scoring::mpsswe(std::span(errors_a, n), std::span(errors_b, n));
    *out = rtlm_mpsswe_result{r.z, r.p_value, r.significant ? 1 : 0, r.segments,
                              r.mean_difference};
  });
}

rtlm_status rtlm_mpsswe_files(const char* selections_a, const char* selections_b,
                              rtlm_mpsswe_result* out) {
  return guard([&] {
    require(selections_a != nullptr && selections_b != nullptr && out != nullptr,
            "rtlm_mpsswe_files: null argument");
    const auto [a, b] =
        rtlm::scoring::paired_errors(rtlm::scoring::read_selection_errors(selections_a),
                                     rtlm::scoring::read_selection_errors(selections_b));
    const auto r = rtlm::scoring::mpsswe(a, b);
    *out = rtlm_mpsswe_result{r.z, r.p_value, r.significant ? 1 : 0, r.segments,
                              r.mean_difference};
  });
}

rtlm_status rtlm_wer(const char* reference, const char* hypothesis, rtlm_wer_result* out) {
  return guard([&] {
    require(reference != nullptr && hypothesis != nullptr && out != nullptr,
            "rtlm_wer: null argument");
    const auto r = rtlm::scoring::compute_wer(rtlm::split_whitespace(reference),
                                              rtlm::split_whitespace(hypothesis));
    *out = rtlm_wer_result{r.substitutions, r.insertions, r.deletions, r.ref_length, r.wer,
                           r.empty_reference ? 1 : 0};
  });
}

rtlm_status rtlm_self_test(uint64_t seed, rtlm_log_fn log, void* user, int* failures) {
  return guard([&] {
    require(failures != nullptr, "rtlm_self_test: null argument");
    int failed = 0;
    rtlm::run_self_test(seed, 3, [&](const rtlm::CheckOutcome& c) {
      if (!c.passed) ++failed;
      emit(log, user, std::string(c.passed ? "PASS " : "FAIL ") + c.name +
                          (c.detail.empty() ? "" : " (" + c.detail + ")"));
    });
    *failures = failed;
  });
}

}  // extern "C"
