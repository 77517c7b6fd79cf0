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

/* Public C interface of the rtlm language-modeling library.
 *
 * All functions return an rtlm_status. On failure the message of the most
 * recent error on the calling thread is available from rtlm_last_error().
 * Objects are opaque handles created and released by the library.
 */
#ifndef RTLM_RTLM_H_
#define RTLM_RTLM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RTLM_API __declspec(dllexport)
#else
#define RTLM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rtlm_status {
  RTLM_OK = 0,
  RTLM_ERR_INVALID_ARGUMENT = 1,
  RTLM_ERR_SHAPE = 2,
  RTLM_ERR_INDEX = 3,
  RTLM_ERR_NUMERIC = 4,
  RTLM_ERR_CONTRACT = 5,
  RTLM_ERR_PARSE = 6,
  RTLM_ERR_IO = 7,
  RTLM_ERR_UNDEFINED_RESULT = 8,
  RTLM_ERR_INTERNAL = 9
} rtlm_status;

RTLM_API const char* rtlm_version(void);
RTLM_API const char* rtlm_status_string(rtlm_status status);
/* Message of the last failure on this thread; "" when none. */
RTLM_API const char* rtlm_last_error(void);

/* Receives one line of progress output (no trailing newline). */
typedef void (*rtlm_log_fn)(const char* line, void* user);

/* ------------------------------------------------------------------------
 * Experiment configuration: flat key=value settings. */

typedef struct rtlm_config rtlm_config;

RTLM_API rtlm_status rtlm_config_create(rtlm_config** out);
/* Relative paths inside the file resolve against the file's directory. */
RTLM_API rtlm_status rtlm_config_load(const char* path, rtlm_config** out);
/* Overrides one key. Unknown keys give RTLM_ERR_INVALID_ARGUMENT. */
RTLM_API rtlm_status rtlm_config_set(rtlm_config* config, const char* key, const char* value);
/* Copies the value of key into buf (NUL-terminated, truncated to cap).
 * *found is 0 when the key is unset. */
RTLM_API rtlm_status rtlm_config_get(const rtlm_config* config, const char* key, char* buf,
                                     size_t cap, int* found);
/* Checks that every value parses and the settings are consistent. */
RTLM_API rtlm_status rtlm_config_validate(const rtlm_config* config);
RTLM_API void rtlm_config_free(rtlm_config* config);

/* ------------------------------------------------------------------------
 * Models. A checkpoint is three files: `path` (manifest), `path.bin`
 * (weights) and `path.vocab` (vocabulary). */

typedef struct rtlm_model rtlm_model;

typedef struct rtlm_model_info {
  char arch[32];
  size_t vocab_size;
  size_t n_blocks;
  size_t d_model;
  size_t n_heads;
  size_t segment_len;
  size_t parameter_count;
} rtlm_model_info;

/* Builds the vocabulary from the config's train_corpus and initialises a
 * model with the config's architecture, init scheme and seed. */
RTLM_API rtlm_status rtlm_model_create(const rtlm_config* config, rtlm_model** out);
RTLM_API rtlm_status rtlm_model_load(const char* checkpoint, rtlm_model** out);
RTLM_API rtlm_status rtlm_model_save(const rtlm_model* model, const char* checkpoint);
RTLM_API rtlm_status rtlm_model_info_get(const rtlm_model* model, rtlm_model_info* out);
/* Natural-log probability of each token of `target` (whitespace-separated
 * words; a closing eos is scored too) after `context` words, which are
 * followed by eos. out_log_probs must hold n_words(target) + 1 values. */
RTLM_API rtlm_status rtlm_model_score(const rtlm_model* model, const char* context,
                                      const char* target, double* out_log_probs,
                                      size_t capacity, size_t* written);
RTLM_API void rtlm_model_free(rtlm_model* model);

/* ------------------------------------------------------------------------
 * Pipelines. */

typedef struct rtlm_train_summary {
  size_t steps;
  size_t epochs;
  double final_loss;
  /* exp of the mean validation NLL; NaN without a valid_corpus. */
  double valid_ppl;
} rtlm_train_summary;

/* Trains on train_corpus and writes the checkpoint (key `checkpoint`) and
 * the loss log (key `loss_csv`, default `<checkpoint>.loss.csv`). */
RTLM_API rtlm_status rtlm_train(const rtlm_config* config, rtlm_log_fn log, void* user,
                                rtlm_train_summary* out);

/* Perplexity of `corpus` under `model`, using the config's context_mode. */
RTLM_API rtlm_status rtlm_eval_ppl(const rtlm_config* config, const rtlm_model* model,
                                   const char* corpus, double* out_ppl, size_t* out_tokens);

typedef struct rtlm_rescore_summary {
  size_t utterances;
  size_t conversations;
  size_t errors;
  size_t ref_words;
  double wer;
  double oracle_wer;
} rtlm_rescore_summary;

/* Rescores the config's nbest file with one or two models (the first gets
 * interp_weight) and writes selections to `out` when it is set. */
RTLM_API rtlm_status rtlm_rescore(const rtlm_config* config, const rtlm_model* const* models,
                                  size_t n_models, rtlm_rescore_summary* out);

/* Error-prone word analysis. models[0] is the baseline; the recognition is
 * the baseline's rescored selection. Reference scores use reference
 * histories. The report is written as TSV to the config's `out`. */
RTLM_API rtlm_status rtlm_analyze(const rtlm_config* config, const rtlm_model* const* models,
                                  const char* const* names, size_t n_models, rtlm_log_fn log,
                                  void* user);

typedef struct rtlm_mpsswe_result {
  double z;
  double p_value;
  int significant;
  size_t segments;
  double mean_difference;
} rtlm_mpsswe_result;

RTLM_API rtlm_status rtlm_mpsswe(const double* errors_a, const double* errors_b, size_t n,
                                 rtlm_mpsswe_result* out);
/* Pairs two selection files written by rtlm_rescore by utterance key. */
RTLM_API rtlm_status rtlm_mpsswe_files(const char* selections_a, const char* selections_b,
                                       rtlm_mpsswe_result* out);

typedef struct rtlm_wer_result {
  size_t substitutions;
  size_t insertions;
  size_t deletions;
  size_t ref_length;
  double wer;
  int empty_reference;
} rtlm_wer_result;

/* Whitespace-separated reference and hypothesis. */
RTLM_API rtlm_status rtlm_wer(const char* reference, const char* hypothesis,
                              rtlm_wer_result* out);

/* Runs the built-in gradient and oracle checks; one log line per check.
 * *failures receives the number of failed checks. */
RTLM_API rtlm_status rtlm_self_test(uint64_t seed, rtlm_log_fn log, void* user, int* failures);

#ifdef __cplusplus
}
#endif

#endif /* RTLM_RTLM_H_ */
