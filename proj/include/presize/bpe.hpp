// SPDX-License-Identifier: Apache-2.0
//
// Byte-level byte-pair encoding. The base alphabet is all 256 byte values,
// so any UTF-8 input encodes without out-of-vocabulary tokens and
// decode(encode(x)) == x exactly. Merges are learned over lowercased,
// whitespace-split words and never cross word boundaries; encode itself
// preserves the input bytes (callers lowercase when they want folding).

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "presize/errors.hpp"

namespace presize::bpe {

inline constexpr int kPadId = 256;
inline constexpr int kClsId = 257;
inline constexpr int kFirstMergeId = 258;
inline constexpr int kMinVocabSize = 258;  // 256 bytes + the two specials

struct BpeVocab {
  int target_vocab_size = 8000;
  // merges[i] created token id kFirstMergeId + i from the (left, right) pair.
  std::vector<std::pair<int, int>> merges;
  // Byte expansion per token id; empty strings at the special ids.
  std::vector<std::string> token_bytes;
  // Pair -> merge index lookup, rebuilt by train/load. Read-only afterwards.
  std::unordered_map<std::uint64_t, int> rank;

  int size() const { return kFirstMergeId + static_cast<int>(merges.size()); }
};

/// Greedy most-frequent-pair merging until vocab_size is reached or no
/// pair occurs at least twice. Frequency ties prefer the lexicographically
/// smaller (left bytes, right bytes) pair. Throws ConfigError if
/// vocab_size < 258 or the corpus is empty.
BpeVocab train_bpe(const std::vector<std::string>& corpus, int vocab_size);

/// Tokenizes text. Word runs get the learned merges applied in order;
/// whitespace runs stay raw bytes. max_len > 0 truncates the result, 0
/// means unbounded. Never emits special ids.
std::vector<int> encode(const std::string& text, const BpeVocab& vocab, int max_len = 0);

/// Concatenates token byte expansions, skipping [PAD] and [CLS].
/// Throws std::out_of_range for ids outside the vocab.
std::string decode(const std::vector<int>& ids, const BpeVocab& vocab);

void save_vocab(const BpeVocab& vocab, const std::string& path);
BpeVocab load_vocab(const std::string& path);

/// ASCII-only case folding; multi-byte UTF-8 sequences pass through.
std::string lowercase_ascii(const std::string& s);

}  // namespace presize::bpe
