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

#include "core/rescoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "core/errors.hpp"
#include "core/parallel.hpp"
#include "core/strings.hpp"

namespace rtlm::inline RTLM_PRECISION::scoring {

using json = nlohmann::json;
using lm::TokenId;

// ---------------------------------------------------------------------------
// N-best files

namespace {

std::vector<std::string> parse_words(const json& j, const char* field, std::size_t line) {
  if (!j.is_array()) throw ParseError(line, std::string("'") + field + "' must be an array");
  std::vector<std::string> words;
  for (const auto& w : j) {
    if (!w.is_string()) throw ParseError(line, std::string("'") + field + "' must hold strings");
    words.push_back(w.get<std::string>());
  }
  return words;
}

double parse_score(const json& h, const char* field, std::size_t line) {
  if (!h.contains(field) || !h[field].is_number())
    throw ParseError(line, std::string("hypothesis needs a numeric '") + field + "'");
  const double v = h[field].get<double>();
  if (!std::isfinite(v))
    throw ParseError(line, std::string("hypothesis '") + field + "' score is not finite");
  return v;
}

}  // namespace

std::vector<NBestList> parse_nbest(std::istream& in) {
  std::vector<NBestList> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::out_of_range&) {
      throw ParseError(line_no, "number is not finite");
    } catch (const json::exception& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
    NBestList list;
    if (!j.contains("conv") || !j["conv"].is_string())
      throw ParseError(line_no, "missing string field 'conv'");
    if (!j.contains("utt") || !j["utt"].is_string())
      throw ParseError(line_no, "missing string field 'utt'");
    if (!j.contains("idx") || !j["idx"].is_number_integer() || j["idx"].get<long long>() < 0)
      throw ParseError(line_no, "missing non-negative integer field 'idx'");
    if (!j.contains("ref")) throw ParseError(line_no, "missing field 'ref'");
    if (!j.contains("hyps") || !j["hyps"].is_array() || j["hyps"].empty())
      throw ParseError(line_no, "'hyps' must be a non-empty array");
    list.conversation = j["conv"].get<std::string>();
    list.utterance = j["utt"].get<std::string>();
    list.index = j["idx"].get<std::size_t>();
    list.reference = parse_words(j["ref"], "ref", line_no);
    for (const auto& h : j["hyps"]) {
      if (!h.is_object()) throw ParseError(line_no, "hypotheses must be objects");
      if (!h.contains("words")) throw ParseError(line_no, "hypothesis without 'words'");
      list.hyps.push_back({parse_words(h["words"], "words", line_no),
                           parse_score(h, "am", line_no), parse_score(h, "lm", line_no)});
    }
    lists.push_back(std::move(list));
  }
  return lists;
}

std::vector<NBestList> read_nbest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open N-best file '" + path + "'");
  return parse_nbest(in);
}

std::string serialize_nbest(const NBestList& list) {
  json j;
  j["conv"] = list.conversation;
  j["utt"] = list.utterance;
  j["idx"] = list.index;
  j["ref"] = list.reference;
  j["hyps"] = json::array();
  for (const auto& h : list.hyps)
    j["hyps"].push_back({{"words", h.words}, {"am", h.am_score}, {"lm", h.base_lm_score}});
  return j.dump();
}

std::vector<std::pair<std::size_t, std::size_t>> group_conversations(
    std::span<const NBestList> lists) {
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  std::set<std::string> finished;
  std::size_t i = 0;
  while (i < lists.size()) {
    const std::string& conv = lists[i].conversation;
    if (finished.count(conv))
      throw ContractError("conversation '" + conv + "' is not contiguous in the N-best input");
    std::size_t j = i;
    while (j < lists.size() && lists[j].conversation == conv) {
      if (lists[j].index != j - i)
        throw ContractError("conversation '" + conv + "': utterance '" + lists[j].utterance +
                            "' has idx " + std::to_string(lists[j].index) + ", expected " +
                            std::to_string(j - i));
      ++j;
    }
    groups.emplace_back(i, j);
    finished.insert(conv);
    i = j;
  }
  return groups;
}

// ---------------------------------------------------------------------------
// WER

WerResult compute_wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0U : 1U),
                           at(i - 1, j) + 1, at(i, j - 1) + 1});

  WerResult r;
  r.ref_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0U : 1U)) {
        r.alignment.push_back({same ? EditOp::kMatch : EditOp::kSubstitution, i - 1, j - 1});
        if (!same) ++r.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      r.alignment.push_back({EditOp::kDeletion, i - 1, std::nullopt});
      ++r.deletions;
      --i;
    } else {
      r.alignment.push_back({EditOp::kInsertion, std::nullopt, j - 1});
      ++r.insertions;
      --j;
    }
  }
  std::reverse(r.alignment.begin(), r.alignment.end());
  r.empty_reference = n == 0 && m > 0;
  r.wer = static_cast<double>(r.errors()) / static_cast<double>(std::max<std::size_t>(1, n));
  return r;
}

// ---------------------------------------------------------------------------
// Rescoring

std::string to_string(HistoryMode m) {
  return m == HistoryMode::kOriginal ? "original" : "rescored";
}

HistoryMode parse_history_mode(const std::string& s) {
  if (s == "rescored") return HistoryMode::kRescored;
  if (s == "original") return HistoryMode::kOriginal;
  throw Error(ErrorCode::kInvalidArgument, "unknown history mode '" + s + "'");
}

void RescoreConfig::validate() const {
  if (!(interp_weight >= 0.0 && interp_weight <= 1.0))
    throw ContractError("rescore config: interpolation weight must lie in [0, 1]");
  if (!(lm_scale >= 0.0)) throw ContractError("rescore config: lm scale must be >= 0");
}

double interpolate_log_prob(double log_p1, double log_p2, double weight) {
  if (weight == 1.0) return log_p1;
  if (weight == 0.0) return log_p2;
  const double a = std::log(weight) + log_p1;
  const double b = std::log1p(-weight) + log_p2;
  const double hi = std::max(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

namespace {

std::vector<TokenId> encode_words(const text::Vocab& vocab, std::span<const std::string> words) {
  std::vector<TokenId> ids;
  ids.reserve(words.size() + 1);
  for (const auto& w : words) ids.push_back(vocab.encode(to_lower(w)));
  return ids;
}

// Tracks one model's view of a conversation. The history stream is
// [eos] + (utterance + eos)*; before scoring, the carried state has consumed
// everything up to the token preceding the extended-history context.
class HistoryScorer {
 public:
  explicit HistoryScorer(const ScoringModel& m)
      : model_(m), state_(lm::init_state(m.model->config)) {
    stream_.push_back(lm::kEosId);
  }

  void prepare() {
    const auto& cfg = model_.model->config;
    const std::span<const TokenId> history(stream_.begin() + 1, stream_.end());
    context_ = text::build_extended_history(history, cfg.segment_len);
    const std::size_t prefix_end = history.size() - context_.size();
    lead_ = stream_[prefix_end];
    if (prefix_end > consumed_) {
      state_ = lm::advance_state(cfg, model_.model->params,
                                 std::span(stream_).subspan(consumed_, prefix_end - consumed_),
                                 std::move(state_));
      consumed_ = prefix_end;
    }
  }

  std::vector<double> score(std::span<const std::string> words) const {
    auto target = encode_words(*model_.vocab, words);
    target.push_back(lm::kEosId);
    return lm::score_tokens(model_.model->config, model_.model->params, context_, target,
                            state_, lead_)
        .log_probs;
  }

  void append(std::span<const std::string> words) {
    const auto ids = encode_words(*model_.vocab, words);
    stream_.insert(stream_.end(), ids.begin(), ids.end());
    stream_.push_back(lm::kEosId);
  }

  const std::vector<TokenId>& context() const { return context_; }

 private:
  ScoringModel model_;
  lm::MemoryState state_;
  std::vector<TokenId> stream_;
  std::size_t consumed_ = 0;
  std::vector<TokenId> context_;
  TokenId lead_ = lm::kEosId;
};

void check_models(std::span<const ScoringModel> models) {
  if (models.empty() || models.size() > 2)
    throw ContractError("rescoring needs one or two language models");
  for (const auto& m : models)
    if (m.model == nullptr || m.vocab == nullptr)
      throw ContractError("rescoring model '" + m.name + "' is incomplete");
}

std::vector<double> combine(const std::vector<std::vector<double>>& per_model, double w) {
  if (per_model.size() == 1) return per_model[0];
  std::vector<double> out(per_model[0].size());
  for (std::size_t t = 0; t < out.size(); ++t)
    out[t] = interpolate_log_prob(per_model[0][t], per_model[1][t], w);
  return out;
}

double sum_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::size_t original_best(const NBestList& list) {
  std::size_t best = 0;
  for (std::size_t h = 1; h < list.hyps.size(); ++h)
    if (list.hyps[h].am_score + list.hyps[h].base_lm_score >
        list.hyps[best].am_score + list.hyps[best].base_lm_score)
      best = h;
  return best;
}

}  // namespace

std::vector<UtteranceResult> rescore(std::span<const NBestList> lists,
                                     std::span<const ScoringModel> models,
                                     const RescoreConfig& rc, std::size_t threads) {
  rc.validate();
  check_models(models);
  const auto groups = group_conversations(lists);
  std::vector<UtteranceResult> results(lists.size());

  parallel_for(groups.size(), threads, [&](std::size_t g) {
    std::vector<HistoryScorer> scorers;
    for (const auto& m : models) scorers.emplace_back(m);
    for (std::size_t u = groups[g].first; u < groups[g].second; ++u) {
      const NBestList& list = lists[u];
      for (auto& s : scorers) s.prepare();

      UtteranceResult r;
      r.conversation = list.conversation;
      r.utterance = list.utterance;
      r.index = list.index;
      r.context = scorers[0].context();
      std::vector<std::vector<double>> hyp_tokens;
      for (const auto& hyp : list.hyps) {
        std::vector<std::vector<double>> per_model;
        for (const auto& s : scorers) per_model.push_back(s.score(hyp.words));
        hyp_tokens.push_back(combine(per_model, rc.interp_weight));
        r.hyp_totals.push_back(hyp.am_score + rc.lm_scale * sum_of(hyp_tokens.back()));
      }
      for (std::size_t h = 1; h < r.hyp_totals.size(); ++h)
        if (r.hyp_totals[h] > r.hyp_totals[r.selected]) r.selected = h;
      r.token_log_probs = hyp_tokens[r.selected];
      r.lm_score = sum_of(r.token_log_probs);
      r.total_score = r.hyp_totals[r.selected];
      r.wer = compute_wer(list.reference, list.hyps[r.selected].words);
      r.oracle_errors = std::numeric_limits<std::size_t>::max();
      for (const auto& hyp : list.hyps)
        r.oracle_errors = std::min(r.oracle_errors, compute_wer(list.reference, hyp.words).errors());

      const std::size_t history_pick =
          rc.history_mode == HistoryMode::kRescored ? r.selected : original_best(list);
      for (auto& s : scorers) s.append(list.hyps[history_pick].words);
      results[u] = std::move(r);
    }
  });
  return results;
}

std::vector<std::vector<double>> reference_log_probs(std::span<const NBestList> lists,
                                                     std::span<const ScoringModel> models,
                                                     const RescoreConfig& rc,
                                                     std::size_t threads) {
  rc.validate();
  check_models(models);
  const auto groups = group_conversations(lists);
  std::vector<std::vector<double>> out(lists.size());
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    std::vector<HistoryScorer> scorers;
    for (const auto& m : models) scorers.emplace_back(m);
    for (std::size_t u = groups[g].first; u < groups[g].second; ++u) {
      std::vector<std::vector<double>> per_model;
      for (auto& s : scorers) {
        s.prepare();
        per_model.push_back(s.score(lists[u].reference));
      }
      out[u] = combine(per_model, rc.interp_weight);
      for (auto& s : scorers) s.append(lists[u].reference);
    }
  });
  return out;
}

CorpusWer corpus_wer(std::span<const UtteranceResult> results) {
  CorpusWer w;
  for (const auto& r : results) {
    w.errors += r.wer.errors();
    w.ref_words += r.wer.ref_length;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Significance

MpssweResult mpsswe(std::span<const double> errors_a, std::span<const double> errors_b,
                    double alpha) {
  if (errors_a.size() != errors_b.size())
    throw ContractError("mpsswe: " + std::to_string(errors_a.size()) + " vs " +
                        std::to_string(errors_b.size()) + " segments");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < errors_a.size(); ++i) {
    const double d = errors_a[i] - errors_b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  MpssweResult r;
  r.segments = diffs.size();
  if (diffs.empty()) return r;
  if (diffs.size() < 2)
    throw UndefinedResultError("mpsswe: only one segment differs between the systems");

  const double n = static_cast<double>(diffs.size());
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= n;
  double ss = 0.0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  r.mean_difference = mean;
  if (sd == 0.0) {
    r.z = mean > 0 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
  } else {
    r.z = mean / (sd / std::sqrt(n));
    r.p_value = std::erfc(std::fabs(r.z) / std::sqrt(2.0));
  }
  r.significant = r.p_value < alpha;
  return r;
}

// ---------------------------------------------------------------------------
// Error-prone words

ErrorProneReport error_prone_analysis(
    std::span<const std::vector<std::string>> references,
    std::span<const std::vector<std::string>> recognized,
    std::span<const SystemWordScores> systems,
    const std::unordered_map<std::string, std::size_t>& train_counts) {
  if (references.size() != recognized.size())
    throw ContractError("error_prone_analysis: references and recognitions differ in length");
  if (systems.empty()) throw ContractError("error_prone_analysis: no systems");
  for (const auto& s : systems) {
    if (s.neg_log_probs.size() != references.size())
      throw ContractError("error_prone_analysis: system '" + s.system +
                          "' has scores for a different number of utterances");
    for (std::size_t u = 0; u < references.size(); ++u)
      if (s.neg_log_probs[u].size() != references[u].size())
        throw ContractError("error_prone_analysis: system '" + s.system +
                            "' word scores do not match reference " + std::to_string(u));
  }

  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // word -> (wrong, total)
  for (std::size_t u = 0; u < references.size(); ++u) {
    const auto wer = compute_wer(references[u], recognized[u]);
    for (const auto& a : wer.alignment) {
      if (!a.ref_index) continue;
      auto& t = tally[references[u][*a.ref_index]];
      ++t.second;
      if (a.op != EditOp::kMatch) ++t.first;
    }
  }
  ErrorProneReport report;
  std::set<std::string> prone;
  for (const auto& [w, t] : tally)
    if (2 * t.first > t.second) prone.insert(w);
  report.error_prone_words.assign(prone.begin(), prone.end());

  auto word_averages = [&](const SystemWordScores& s) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (std::size_t u = 0; u < references.size(); ++u)
      for (std::size_t t = 0; t < references[u].size(); ++t) {
        auto& a = acc[references[u][t]];
        a.first += s.neg_log_probs[u][t];
        ++a.second;
      }
    std::map<std::string, double> avg;
    for (const auto& [w, a] : acc) avg[w] = a.first / static_cast<double>(a.second);
    return avg;
  };
  auto train_count = [&](const std::string& w) {
    auto it = train_counts.find(w);
    return it == train_counts.end() ? 0.0 : static_cast<double>(it->second);
  };

  const auto baseline = word_averages(systems[0]);
  for (std::size_t k = 0; k < systems.size(); ++k) {
    const auto& s = systems[k];
    ErrorProneRow row;
    row.system = s.system;
    double total = 0.0;
    std::size_t tokens = 0;
    for (std::size_t u = 0; u < references.size(); ++u)
      for (std::size_t t = 0; t < references[u].size(); ++t)
        if (prone.count(references[u][t])) {
          total += s.neg_log_probs[u][t];
          ++tokens;
        }
    if (tokens > 0) row.error_prone_score = total / static_cast<double>(tokens);
    report.error_prone_tokens = tokens;

    double occ = 0.0;
    if (k == 0) {
      for (const auto& [w, a] : baseline) occ += train_count(w);
      row.words_counted = baseline.size();
    } else {
      for (const auto& [w, a] : word_averages(s))
        if (a < baseline.at(w)) {
          occ += train_count(w);
          ++row.words_counted;
        }
    }
    if (row.words_counted > 0) row.average_occurrences = occ / static_cast<double>(row.words_counted);
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports

void write_selections(const std::string& path, std::span<const UtteranceResult> results) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write selections '" + path + "'");
  out << "conv\tutt\tidx\tselected\terrors\tref_len\tsub\tins\tdel\toracle_errors\tlm_score\ttotal_score\n";
  out.precision(10);
  for (const auto& r : results)
    out << r.conversation << '\t' << r.utterance << '\t' << r.index << '\t' << r.selected << '\t'
        << r.wer.errors() << '\t' << r.wer.ref_length << '\t' << r.wer.substitutions << '\t'
        << r.wer.insertions << '\t' << r.wer.deletions << '\t' << r.oracle_errors << '\t'
        << r.lm_score << '\t' << r.total_score << '\n';
}

SelectionErrors read_selection_errors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open selections '" + path + "'");
  SelectionErrors out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 5) throw ParseError(line_no, "expected at least 5 tab-separated fields");
    out.keys.push_back(fields[0] + "/" + fields[1]);
    out.errors.push_back(static_cast<double>(parse_size(fields[4], line_no)));
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> paired_errors(const SelectionErrors& a,
                                                                  const SelectionErrors& b) {
  std::unordered_map<std::string, double> lookup;
  for (std::size_t i = 0; i < b.keys.size(); ++i) lookup[b.keys[i]] = b.errors[i];
  if (lookup.size() != a.keys.size())
    throw ContractError("selection files cover different utterance sets");
  std::pair<std::vector<double>, std::vector<double>> out;
  for (std::size_t i = 0; i < a.keys.size(); ++i) {
    auto it = lookup.find(a.keys[i]);
    if (it == lookup.end()) throw ContractError("utterance '" + a.keys[i] + "' missing from second file");
    out.first.push_back(a.errors[i]);
    out.second.push_back(it->second);
  }
  return out;
}

}  // namespace rtlm::scoring
