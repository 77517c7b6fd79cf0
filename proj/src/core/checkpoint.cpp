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

#include "core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>

#include "core/errors.hpp"
#include "core/strings.hpp"

namespace rtlm::inline RTLM_PRECISION::lm {

namespace {

constexpr const char* kMagic = "rtlm-checkpoint 1";

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

void write_le(std::ostream& os, std::span<const Real> values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    bytes[4 * i + 0] = static_cast<unsigned char>(bits & 0xFFU);
    bytes[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xFFU);
    bytes[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xFFU);
    bytes[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xFFU);
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

std::vector<Real> read_le(const std::vector<unsigned char>& blob, std::size_t offset,
                          std::size_t count) {
  std::vector<Real> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* b = blob.data() + offset + 4 * i;
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

Shape parse_shape(const std::string& s, std::size_t line) {
  Shape shape;
  if (s == "scalar") return shape;
  for (const auto& part : split(s, ',')) shape.push_back(parse_size(part, line));
  return shape;
}

std::string format_shape(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> model_config_entries(
    const ModelConfig& cfg) {
  std::string blocks;
  for (auto b : cfg.lstm_blocks) {
    if (!blocks.empty()) blocks += ',';
    blocks += std::to_string(b);
  }
  return {
      {"arch", to_string(cfg.arch)},
      {"n_blocks", std::to_string(cfg.n_blocks)},
      {"d_model", std::to_string(cfg.d_model)},
      {"n_heads", std::to_string(cfg.n_heads)},
      {"segment_len", std::to_string(cfg.segment_len)},
      {"lstm_blocks", blocks},
      {"fusion_activation", nn::to_string(cfg.fusion_activation)},
      {"vocab_size", std::to_string(cfg.vocab_size)},
      {"ffn_inner", std::to_string(cfg.ffn_inner)},
      {"norm_placement", nn::to_string(cfg.norm_placement)},
      {"tie_embeddings", cfg.tie_embeddings ? "true" : "false"},
      {"dropout", format_float(cfg.dropout)},
      {"layer_norm_eps", format_float(cfg.layer_norm_eps)},
      {"lstm_lm_layers", std::to_string(cfg.lstm_lm_layers)},
      {"lstm_lm_hidden", std::to_string(cfg.lstm_lm_hidden)},
  };
}

bool apply_model_config_entry(ModelConfig& cfg, const std::string& key,
                              const std::string& value) {
  if (key == "arch") {
    cfg.arch = parse_architecture(value);
  } else if (key == "n_blocks") {
    cfg.n_blocks = parse_size(value);
  } else if (key == "d_model") {
    cfg.d_model = parse_size(value);
  } else if (key == "n_heads") {
    cfg.n_heads = parse_size(value);
  } else if (key == "segment_len") {
    cfg.segment_len = parse_size(value);
  } else if (key == "lstm_blocks") {
    cfg.lstm_blocks.clear();
    for (const auto& part : split(value, ','))
      if (!trim(part).empty()) cfg.lstm_blocks.insert(parse_size(trim(part)));
  } else if (key == "fusion_activation") {
    cfg.fusion_activation = nn::parse_activation(value);
  } else if (key == "vocab_size") {
    cfg.vocab_size = parse_size(value);
  } else if (key == "ffn_inner") {
    cfg.ffn_inner = parse_size(value);
  } else if (key == "norm_placement") {
    cfg.norm_placement = nn::parse_norm_placement(value);
  } else if (key == "tie_embeddings") {
    cfg.tie_embeddings = parse_bool(value);
  } else if (key == "dropout") {
    cfg.dropout = static_cast<float>(parse_double(value));
  } else if (key == "layer_norm_eps") {
    cfg.layer_norm_eps = static_cast<float>(parse_double(value));
  } else if (key == "lstm_lm_layers") {
    cfg.lstm_lm_layers = parse_size(value);
  } else if (key == "lstm_lm_hidden") {
    cfg.lstm_lm_hidden = parse_size(value);
  } else {
    return false;
  }
  return true;
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const Parameters& params) {
  std::ofstream manifest(path);
  std::ofstream blob(path + ".bin", std::ios::binary);
  if (!manifest || !blob) throw IoError("cannot write checkpoint '" + path + "'");
  manifest << kMagic << '\n';
  for (const auto& [k, v] : model_config_entries(cfg))
    manifest << "config " << k << '=' << v << '\n';
  std::size_t offset = 0;
  for (const auto& [name, tensor] : params) {
    manifest << "param " << name << ' ' << format_shape(tensor.shape()) << ' '
             << offset << '\n';
    write_le(blob, tensor.data());
    offset += tensor.size() * 4;
  }
  if (!manifest || !blob) throw IoError("short write on checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream manifest(path);
  if (!manifest) throw IoError("cannot open checkpoint '" + path + "'");
  std::ifstream blob_file(path + ".bin", std::ios::binary);
  if (!blob_file) throw IoError("cannot open checkpoint blob '" + path + ".bin'");
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(blob_file)),
                                        std::istreambuf_iterator<char>());

  Model model;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(manifest, line) || trim(line) != kMagic)
    throw ParseError(1, "'" + path + "' is not an rtlm checkpoint");
  ++line_no;
  while (std::getline(manifest, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty()) continue;
    std::istringstream fields(text);
    std::string kind;
    fields >> kind;
    if (kind == "config") {
      std::string kv;
      std::getline(fields, kv);
      kv = trim(kv);
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ParseError(line_no, "config entry without '='");
      if (!apply_model_config_entry(model.config, kv.substr(0, eq), kv.substr(eq + 1)))
        throw ParseError(line_no, "unknown config key '" + kv.substr(0, eq) + "'");
    } else if (kind == "param") {
      std::string name, shape_text, offset_text;
      if (!(fields >> name >> shape_text >> offset_text))
        throw ParseError(line_no, "expected 'param <name> <shape> <offset>'");
      Shape shape = parse_shape(shape_text, line_no);
      const std::size_t offset = parse_size(offset_text, line_no);
      const std::size_t count = shape_size(shape);
      if (offset + count * 4 > blob.size())
        throw ParseError(line_no, "parameter '" + name + "' runs past the end of the blob");
      if (!model.params
               .emplace(name, Tensor::from(shape, read_le(blob, offset, count), true))
               .second)
        throw ParseError(line_no, "duplicate parameter '" + name + "'");
    } else {
      throw ParseError(line_no, "unknown manifest entry '" + kind + "'");
    }
  }
  model.config.validate();
  check_parameters(model.config, model.params);
  return model;
}

}  // namespace rtlm::lm
