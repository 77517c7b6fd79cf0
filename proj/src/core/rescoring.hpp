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

#pragma once

// N-best rescoring with extended history, LM interpolation, WER scoring, the
// matched-pairs sentence-segment word error (MPSSWE) test and error-prone
// word analysis.
//
// N-best files hold one JSON object per line:
//   {"conv": str, "utt": str, "idx": int, "ref": [words],
//    "hyps": [{"words": [...], "am": float, "lm": float}, ...]}
// Utterances of a conversation must be contiguous with idx = 0, 1, 2, ...

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/corpus.hpp"
#include "core/model.hpp"

namespace rtlm::inline RTLM_PRECISION::scoring {

struct Hypothesis {
  std::vector<std::string> words;
  double am_score = 0.0;       // log domain
  double base_lm_score = 0.0;  // log domain
};

struct NBestList {
  std::string conversation;
  std::string utterance;
  std::size_t index = 0;
  std::vector<std::string> reference;
  std::vector<Hypothesis> hyps;
};

std::vector<NBestList> parse_nbest(std::istream& in);
std::vector<NBestList> read_nbest(const std::string& path);
std::string serialize_nbest(const NBestList& list);

// Throws ContractError unless conversations are contiguous runs with
// idx = 0, 1, 2, ... Returns [begin, end) ranges, one per conversation.
std::vector<std::pair<std::size_t, std::size_t>> group_conversations(
    std::span<const NBestList> lists);

// ---------------------------------------------------------------------------
// WER

enum class EditOp { kMatch, kSubstitution, kInsertion, kDeletion };

struct AlignedPair {
  EditOp op = EditOp::kMatch;
  std::optional<std::size_t> ref_index;
  std::optional<std::size_t> hyp_index;
};

struct WerResult {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_length = 0;
  double wer = 0.0;
  // Set when the reference is empty but the hypothesis is not; wer is then
  // insertions / max(1, ref_length).
  bool empty_reference = false;
  std::vector<AlignedPair> alignment;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

// Unit-cost Levenshtein alignment. On equal-cost paths the backtrace prefers
// match/substitution, then deletion, then insertion.
WerResult compute_wer(std::span<const std::string> ref, std::span<const std::string> hyp);

// ---------------------------------------------------------------------------
// Rescoring

enum class HistoryMode { kRescored, kOriginal };

std::string to_string(HistoryMode m);
HistoryMode parse_history_mode(const std::string& s);

struct RescoreConfig {
  double lm_scale = 1.0;
  // Weight of the first model in P = w P1 + (1 - w) P2.
  double interp_weight = 0.6;
  HistoryMode history_mode = HistoryMode::kRescored;

  void validate() const;
};

struct ScoringModel {
  const lm::Model* model = nullptr;
  const text::Vocab* vocab = nullptr;
  std::string name;
};

// log(w exp(a) + (1 - w) exp(b)); exactly a when w == 1 and b when w == 0.
double interpolate_log_prob(double log_p1, double log_p2, double weight);

struct UtteranceResult {
  std::string conversation;
  std::string utterance;
  std::size_t index = 0;
  std::size_t selected = 0;
  // Per-token log-probabilities of the selected hypothesis (its words, then
  // the closing eos).
  std::vector<double> token_log_probs;
  double lm_score = 0.0;
  double total_score = 0.0;
  std::vector<double> hyp_totals;
  WerResult wer;
  std::size_t oracle_errors = 0;
  // Context ids (first model's vocabulary) used for this utterance.
  std::vector<lm::TokenId> context;
};

// Each hypothesis is scored after the extended history built from earlier
// utterances of its conversation; total = am + lm_scale * lm. The best total
// wins, ties going to the lower index. Conversations are independent and
// run on up to `threads` workers.
std::vector<UtteranceResult> rescore(std::span<const NBestList> lists,
                                     std::span<const ScoringModel> models,
                                     const RescoreConfig& rc, std::size_t threads = 1);

// Log-probabilities of every reference word plus the closing eos, using the
// previous references of the conversation as history. Two models are
// interpolated with rc.interp_weight.
std::vector<std::vector<double>> reference_log_probs(std::span<const NBestList> lists,
                                                     std::span<const ScoringModel> models,
                                                     const RescoreConfig& rc,
                                                     std::size_t threads = 1);

struct CorpusWer {
  std::size_t errors = 0;
  std::size_t ref_words = 0;
  double wer() const {
    return ref_words ? static_cast<double>(errors) / static_cast<double>(ref_words) : 0.0;
  }
};

CorpusWer corpus_wer(std::span<const UtteranceResult> results);

// ---------------------------------------------------------------------------
// Significance

struct MpssweResult {
  double z = 0.0;
  double p_value = 1.0;
  bool significant = false;
  std::size_t segments = 0;  // segments with a non-zero difference
  double mean_difference = 0.0;
};

// Paired test on d_i = errors_a[i] - errors_b[i] over the segments where
// d_i != 0: z = mean(d) / (sd(d) / sqrt(n)), two-tailed normal p-value.
// Identical systems give z = 0, p = 1. Throws UndefinedResultError when only
// one segment differs.
MpssweResult mpsswe(std::span<const double> errors_a, std::span<const double> errors_b,
                    double alpha = 0.05);

// ---------------------------------------------------------------------------
// Error-prone words

struct SystemWordScores {
  std::string system;
  // Negative log-probability of each reference word, per utterance.
  std::vector<std::vector<double>> neg_log_probs;
};

struct ErrorProneRow {
  std::string system;
  // Mean LM score over error-prone word tokens; empty when there are none.
  std::optional<double> error_prone_score;
  // Baseline: mean training count over all distinct test words. Others: mean
  // training count over words whose average score is below the baseline's.
  std::optional<double> average_occurrences;
  std::size_t words_counted = 0;
};

struct ErrorProneReport {
  std::vector<std::string> error_prone_words;  // sorted
  std::size_t error_prone_tokens = 0;
  std::vector<ErrorProneRow> rows;
};

// A word is error-prone when more than half of its reference occurrences are
// not aligned as correct in `recognized`. systems[0] is the baseline.
ErrorProneReport error_prone_analysis(
    std::span<const std::vector<std::string>> references,
    std::span<const std::vector<std::string>> recognized,
    std::span<const SystemWordScores> systems,
    const std::unordered_map<std::string, std::size_t>& train_counts);

// ---------------------------------------------------------------------------
// Reports

void write_selections(const std::string& path, std::span<const UtteranceResult> results);

struct SelectionErrors {
  std::vector<std::string> keys;  // "conv/utt" in file order
  std::vector<double> errors;
};

SelectionErrors read_selection_errors(const std::string& path);

// Aligns two selection files by utterance key, in the order of `a`.
std::pair<std::vector<double>, std::vector<double>> paired_errors(
    const SelectionErrors& a, const SelectionErrors& b);

}  // namespace rtlm::scoring
