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

// Text ingestion. Corpus files are UTF-8, one utterance per line, with blank
// lines between documents (meetings / conversations). Words are split on
// whitespace and lowercased.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/model.hpp"

namespace rtlm::inline RTLM_PRECISION::text {

using lm::TokenId;

inline constexpr const char* kEosWord = "<eos>";
inline constexpr const char* kUnkWord = "<unk>";

class Vocab {
 public:
  Vocab();

  TokenId eos() const { return lm::kEosId; }
  TokenId unk() const { return lm::kUnkId; }
  std::size_t size() const { return words_.size(); }

  // Appends a non-special word; returns its id (existing id if present).
  TokenId add(const std::string& word);
  TokenId encode(const std::string& word) const;
  std::vector<TokenId> encode(std::span<const std::string> words) const;
  const std::string& decode(TokenId id) const;
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  // Non-special words in id order.
  std::span<const std::string> words() const {
    return std::span(words_).subspan(2);
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

using Utterance = std::vector<std::string>;

struct Document {
  std::string id;
  std::vector<Utterance> utterances;
  std::size_t word_count() const;
};

std::vector<Document> parse_corpus(std::istream& in);
std::vector<Document> read_corpus(const std::string& path);

// Each utterance becomes its own document, which makes every model reset
// its state at utterance boundaries.
std::vector<Document> split_utterances(std::span<const Document> docs);

// Words seen at least min_count times, ordered by count (descending) and
// then lexicographically.
Vocab build_vocab(std::span<const Document> docs, std::size_t min_count);

void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

std::unordered_map<std::string, std::size_t> word_counts(
    std::span<const Document> docs);

// One training unit. targets are the segment's tokens; inputs[t] is the
// token before targets[t] in the stream (eos at the start of a document).
// mask is 0 on padding.
struct Segment {
  std::size_t index = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<std::uint8_t> mask;
};

struct SegmentStream {
  std::string document_id;
  std::vector<Segment> segments;
  std::size_t token_count() const;
};

// Utterances are followed by eos (unless insert_eos is false) and the
// stream is cut into segment_len tokens; the last segment is eos-padded.
SegmentStream make_segments(const Document& doc, const Vocab& vocab,
                            std::size_t segment_len, bool insert_eos = true);

std::vector<SegmentStream> make_streams(std::span<const Document> docs,
                                        const Vocab& vocab,
                                        std::size_t segment_len,
                                        bool insert_eos = true);

// Utterances joined into one token stream, each followed by eos.
std::vector<TokenId> flatten_history(std::span<const std::vector<TokenId>> utterances);

// The last segment_len - 1 tokens of an already flattened history, so that
// context plus the first current word fill one segment.
std::vector<TokenId> build_extended_history(std::span<const TokenId> history,
                                            std::size_t segment_len);

}  // namespace rtlm::text
