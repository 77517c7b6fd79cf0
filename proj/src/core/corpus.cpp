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

#include "core/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "core/errors.hpp"
#include "core/strings.hpp"

namespace rtlm::inline RTLM_PRECISION::text {

Vocab::Vocab() {
  words_ = {kEosWord, kUnkWord};
  index_[kEosWord] = lm::kEosId;
  index_[kUnkWord] = lm::kUnkId;
}

TokenId Vocab::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(words_.size());
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

TokenId Vocab::encode(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? unk() : it->second;
}

std::vector<TokenId> Vocab::encode(std::span<const std::string> words) const {
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(encode(w));
  return ids;
}

const std::string& Vocab::decode(TokenId id) const {
  if (id >= words_.size())
    throw IndexError("vocab: id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::size_t Document::word_count() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.size();
  return n;
}

std::vector<Document> parse_corpus(std::istream& in) {
  std::vector<Document> docs;
  Document current;
  auto flush = [&] {
    if (current.utterances.empty()) return;
    current.id = "doc" + std::to_string(docs.size());
    docs.push_back(std::move(current));
    current = Document{};
  };
  std::string line;
  while (std::getline(in, line)) {
    auto words = split_whitespace(to_lower(line));
    if (words.empty()) {
      flush();
      continue;
    }
    current.utterances.push_back(std::move(words));
  }
  flush();
  return docs;
}

std::vector<Document> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  return parse_corpus(in);
}

std::vector<Document> split_utterances(std::span<const Document> docs) {
  std::vector<Document> out;
  for (const auto& doc : docs)
    for (std::size_t i = 0; i < doc.utterances.size(); ++i)
      out.push_back({doc.id + "/" + std::to_string(i), {doc.utterances[i]}});
  return out;
}

std::unordered_map<std::string, std::size_t> word_counts(std::span<const Document> docs) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : docs)
    for (const auto& u : doc.utterances)
      for (const auto& w : u) ++counts[w];
  return counts;
}

Vocab build_vocab(std::span<const Document> docs, std::size_t min_count) {
  if (min_count < 1) throw ContractError("build_vocab: min_count must be at least 1");
  const auto counts = word_counts(docs);
  if (counts.empty()) throw ContractError("build_vocab: empty corpus");
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [w, c] : counts)
    if (c >= min_count && w != kEosWord && w != kUnkWord) entries.emplace_back(w, c);
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab vocab;
  for (const auto& [w, c] : entries) vocab.add(w);
  return vocab;
}

void save_vocab(const std::string& path, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocab '" + path + "'");
  for (const auto& w : vocab.words()) out << w << '\n';
  if (!out) throw IoError("short write on vocab '" + path + "'");
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab '" + path + "'");
  Vocab vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string w = trim(line);
    if (w.empty() || w.find_first_of(" \t") != std::string::npos)
      throw ParseError(line_no, "vocab entries must be single non-empty words");
    if (vocab.contains(w)) throw ParseError(line_no, "duplicate vocab entry '" + w + "'");
    vocab.add(w);
  }
  return vocab;
}

std::size_t SegmentStream::token_count() const {
  std::size_t n = 0;
  for (const auto& s : segments)
    n += static_cast<std::size_t>(std::count(s.mask.begin(), s.mask.end(), 1));
  return n;
}

SegmentStream make_segments(const Document& doc, const Vocab& vocab,
                            std::size_t segment_len, bool insert_eos) {
  if (segment_len < 2) throw ContractError("make_segments: segment length must be at least 2");
  std::vector<TokenId> stream;
  for (const auto& u : doc.utterances) {
    const auto ids = vocab.encode(u);
    stream.insert(stream.end(), ids.begin(), ids.end());
    if (insert_eos) stream.push_back(vocab.eos());
  }
  SegmentStream out;
  out.document_id = doc.id;
  TokenId previous = vocab.eos();
  for (std::size_t start = 0; start < stream.size(); start += segment_len) {
    Segment seg;
    seg.index = out.segments.size();
    for (std::size_t t = 0; t < segment_len; ++t) {
      const bool real = start + t < stream.size();
      const TokenId tok = real ? stream[start + t] : vocab.eos();
      seg.inputs.push_back(previous);
      seg.targets.push_back(tok);
      seg.mask.push_back(real ? 1 : 0);
      previous = tok;
    }
    out.segments.push_back(std::move(seg));
  }
  return out;
}

std::vector<SegmentStream> make_streams(std::span<const Document> docs, const Vocab& vocab,
                                        std::size_t segment_len, bool insert_eos) {
  std::vector<SegmentStream> streams;
  streams.reserve(docs.size());
  for (const auto& d : docs) {
    auto s = make_segments(d, vocab, segment_len, insert_eos);
    if (!s.segments.empty()) streams.push_back(std::move(s));
  }
  return streams;
}

std::vector<TokenId> flatten_history(std::span<const std::vector<TokenId>> utterances) {
  std::vector<TokenId> flat;
  for (const auto& u : utterances) {
    flat.insert(flat.end(), u.begin(), u.end());
    flat.push_back(lm::kEosId);
  }
  return flat;
}

std::vector<TokenId> build_extended_history(std::span<const TokenId> history,
                                            std::size_t segment_len) {
  const std::size_t keep = std::min(history.size(), segment_len > 0 ? segment_len - 1 : 0);
  return {history.end() - static_cast<std::ptrdiff_t>(keep), history.end()};
}

}  // namespace rtlm::text
