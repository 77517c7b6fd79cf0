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

// Exercises the shared library through its public header only.
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <doctest.h>

#include "rtlm/rtlm.h"

namespace {

struct Scratch {
  std::filesystem::path dir;
  Scratch() {
    std::random_device rd;
    dir = std::filesystem::temp_directory_path() / ("rtlm-capi-" + std::to_string(rd()));
    std::filesystem::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    std::filesystem::remove_all(dir, ec);
  }
  std::string file(const char* name) const { return (dir / name).string(); }
};

rtlm_config* toy_config(const char* arch) {
  rtlm_config* cfg = nullptr;
  REQUIRE(rtlm_config_load("configs/toy_tlm.cfg", &cfg) == RTLM_OK);
  REQUIRE(rtlm_config_set(cfg, "arch", arch) == RTLM_OK);
  REQUIRE(rtlm_config_set(cfg, "d_model", "8") == RTLM_OK);
  REQUIRE(rtlm_config_set(cfg, "n_heads", "2") == RTLM_OK);
  REQUIRE(rtlm_config_set(cfg, "segment_len", "8") == RTLM_OK);
  REQUIRE(rtlm_config_set(cfg, "epochs", "1") == RTLM_OK);
  return cfg;
}

void collect(const char* line, void* user) {
  static_cast<std::vector<std::string>*>(user)->emplace_back(line);
}

}  // namespace

TEST_SUITE("c api") {

TEST_CASE("status strings and the last error") {
  CHECK(std::strlen(rtlm_version()) > 0);
  CHECK(std::string(rtlm_status_string(RTLM_OK)) == "ok");
  CHECK(std::strlen(rtlm_status_string(RTLM_ERR_PARSE)) > 0);
  rtlm_wer_result w;
  CHECK(rtlm_wer(nullptr, "a", &w) == RTLM_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(rtlm_last_error()) > 0);
  CHECK(rtlm_wer("a b c", "a x c", &w) == RTLM_OK);
  CHECK(w.substitutions == 1);
  CHECK(w.wer == doctest::Approx(1.0 / 3.0));
  CHECK(rtlm_wer("", "a", &w) == RTLM_OK);
  CHECK(w.empty_reference == 1);
}

TEST_CASE("configuration handles") {
  rtlm_config* cfg = nullptr;
  REQUIRE(rtlm_config_create(&cfg) == RTLM_OK);
  CHECK(rtlm_config_set(cfg, "epochs", "4") == RTLM_OK);
  CHECK(rtlm_config_set(cfg, "bogus", "4") == RTLM_ERR_INVALID_ARGUMENT);
  char buf[8];
  int found = -1;
  CHECK(rtlm_config_get(cfg, "epochs", buf, sizeof buf, &found) == RTLM_OK);
  CHECK(found == 1);
  CHECK(std::string(buf) == "4");
  CHECK(rtlm_config_get(cfg, "seed", buf, sizeof buf, &found) == RTLM_OK);
  CHECK(found == 0);
  CHECK(rtlm_config_validate(cfg) == RTLM_OK);
  CHECK(rtlm_config_set(cfg, "interp_weight", "7") == RTLM_OK);
  CHECK(rtlm_config_validate(cfg) == RTLM_ERR_CONTRACT);
  rtlm_config_free(cfg);

  rtlm_config* missing = nullptr;
  CHECK(rtlm_config_load("no/such/file.cfg", &missing) == RTLM_ERR_IO);
  CHECK(missing == nullptr);
}

TEST_CASE("model create, save, load and score") {
  Scratch s;
  rtlm_config* cfg = toy_config("rtlm_f_xl");
  rtlm_model* model = nullptr;
  REQUIRE(rtlm_model_create(cfg, &model) == RTLM_OK);
  rtlm_model_info info;
  REQUIRE(rtlm_model_info_get(model, &info) == RTLM_OK);
  CHECK(std::string(info.arch) == "rtlm_f_xl");
  CHECK(info.d_model == 8);
  CHECK(info.segment_len == 8);
  CHECK(info.parameter_count > 0);

  const auto ckpt = s.file("m.ckpt");
  REQUIRE(rtlm_model_save(model, ckpt.c_str()) == RTLM_OK);
  rtlm_model* back = nullptr;
  REQUIRE(rtlm_model_load(ckpt.c_str(), &back) == RTLM_OK);

  double a[4], b[4];
  size_t na = 0, nb = 0;
  REQUIRE(rtlm_model_score(model, "k5 f10", "f15 a9 f9", a, 4, &na) == RTLM_OK);
  REQUIRE(rtlm_model_score(back, "k5 f10", "f15 a9 f9", b, 4, &nb) == RTLM_OK);
  CHECK(na == 4);
  CHECK(nb == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i] < 0.0);
  }
  CHECK(rtlm_model_score(model, "", "f15 a9 f9", a, 2, &na) == RTLM_ERR_INVALID_ARGUMENT);
  CHECK(rtlm_model_load(s.file("absent.ckpt").c_str(), &back) == RTLM_ERR_IO);

  rtlm_model_free(back);
  rtlm_model_free(model);
  rtlm_config_free(cfg);
}

TEST_CASE("train, evaluate and rescore the toy set") {
  Scratch s;
  rtlm_config* cfg = toy_config("tlm_xl");
  const auto ckpt = s.file("t.ckpt");
  const auto sel = s.file("sel.tsv");
  REQUIRE(rtlm_config_set(cfg, "checkpoint", ckpt.c_str()) == RTLM_OK);
  REQUIRE(rtlm_config_set(cfg, "out", sel.c_str()) == RTLM_OK);
  std::vector<std::string> lines;
  rtlm_train_summary ts;
  REQUIRE(rtlm_train(cfg, collect, &lines, &ts) == RTLM_OK);
  CHECK(ts.steps > 0);
  CHECK(ts.epochs == 1);
  CHECK(std::isfinite(ts.valid_ppl));
  CHECK_FALSE(lines.empty());
  CHECK(std::filesystem::exists(ckpt + ".loss.csv"));

  rtlm_model* model = nullptr;
  REQUIRE(rtlm_model_load(ckpt.c_str(), &model) == RTLM_OK);
  double ppl = 0;
  size_t tokens = 0;
  REQUIRE(rtlm_eval_ppl(cfg, model, "data/toy/valid.txt", &ppl, &tokens) == RTLM_OK);
  CHECK(tokens > 0);
  CHECK(ppl == doctest::Approx(ts.valid_ppl).epsilon(1e-9));

  // uniform model
  rtlm_config* zero = toy_config("tlm");
  REQUIRE(rtlm_config_set(zero, "init", "zero") == RTLM_OK);
  rtlm_model* uniform = nullptr;
  REQUIRE(rtlm_model_create(zero, &uniform) == RTLM_OK);
  rtlm_model_info info;
  REQUIRE(rtlm_model_info_get(uniform, &info) == RTLM_OK);
  REQUIRE(rtlm_eval_ppl(zero, uniform, "data/toy/valid.txt", &ppl, &tokens) == RTLM_OK);
  CHECK(std::abs(ppl - double(info.vocab_size)) <= 1e-3);

  const rtlm_model* models[] = {model, uniform};
  rtlm_rescore_summary rs;
  REQUIRE(rtlm_rescore(cfg, models, 2, &rs) == RTLM_OK);
  CHECK(rs.utterances == 9);
  CHECK(rs.wer >= rs.oracle_wer);
  CHECK(std::filesystem::exists(sel));
  CHECK(rtlm_rescore(cfg, models, 0, &rs) == RTLM_ERR_INVALID_ARGUMENT);

  rtlm_mpsswe_result m;
  REQUIRE(rtlm_mpsswe_files(sel.c_str(), sel.c_str(), &m) == RTLM_OK);
  CHECK(m.p_value == 1.0);
  CHECK(m.significant == 0);

  const auto report = s.file("report.tsv");
  REQUIRE(rtlm_config_set(cfg, "out", report.c_str()) == RTLM_OK);
  const char* names[] = {"tlm_xl", "uniform"};
  REQUIRE(rtlm_analyze(cfg, models, names, 2, nullptr, nullptr) == RTLM_OK);
  CHECK(std::filesystem::file_size(report) > 0);

  rtlm_model_free(uniform);
  rtlm_model_free(model);
  rtlm_config_free(zero);
  rtlm_config_free(cfg);
}

TEST_CASE("significance through the C interface") {
  const double a[] = {3, 3, 3, 3}, b[] = {2, 2, 2, 2};
  rtlm_mpsswe_result r;
  CHECK(rtlm_mpsswe(a, b, 4, &r) == RTLM_OK);
  CHECK(r.significant == 1);
  const double c[] = {3, 2, 2, 2};
  CHECK(rtlm_mpsswe(c, b, 4, &r) == RTLM_ERR_UNDEFINED_RESULT);
  CHECK(rtlm_mpsswe(a, a, 4, &r) == RTLM_OK);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("self test through the C interface") {
  std::vector<std::string> lines;
  int failures = -1;
  REQUIRE(rtlm_self_test(3, collect, &lines, &failures) == RTLM_OK);
  CHECK(failures == 0);
  CHECK(lines.size() > 10);
}

}  // TEST_SUITE
