// SPDX-License-Identifier: Apache-2.0

#include "presize/bpe.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <unordered_map>

namespace presize::bpe {

namespace {

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::uint64_t pack_pair(int l, int r) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)) << 32) |
         static_cast<std::uint32_t>(r);
}

// Replace every adjacent (l, r) with `merged`, scanning left to right and
// skipping over freshly merged tokens.
void apply_merge(std::vector<int>& toks, int l, int r, int merged) {
  std::size_t w = 0;
  for (std::size_t i = 0; i < toks.size();) {
    if (i + 1 < toks.size() && toks[i] == l && toks[i + 1] == r) {
      toks[w++] = merged;
      i += 2;
    } else {
      toks[w++] = toks[i++];
    }
  }
  toks.resize(w);
}

std::vector<std::string> split_words_lower(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (const char ch : lowercase_ascii(text)) {
    if (is_space_byte(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

// Merges applied to one word: repeatedly take the earliest-learned pair
// present in the sequence. A merged token can only feed later rules, so
// this is equivalent to one pass per rule in learned order.
void encode_word(std::vector<int>& toks, const BpeVocab& vocab,
                 const std::unordered_map<std::uint64_t, int>& merge_rank) {
  while (toks.size() >= 2) {
    int best_rank = -1;
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
      const auto it = merge_rank.find(pack_pair(toks[i], toks[i + 1]));
      if (it != merge_rank.end() && (best_rank < 0 || it->second < best_rank))
        best_rank = it->second;
    }
    if (best_rank < 0) break;
    const auto [l, r] = vocab.merges[static_cast<std::size_t>(best_rank)];
    apply_merge(toks, l, r, kFirstMergeId + best_rank);
  }
}

std::unordered_map<std::uint64_t, int> build_rank_table(const BpeVocab& vocab) {
  std::unordered_map<std::uint64_t, int> rank;
  rank.reserve(vocab.merges.size() * 2);
  for (std::size_t i = 0; i < vocab.merges.size(); ++i)
    rank.emplace(pack_pair(vocab.merges[i].first, vocab.merges[i].second),
                 static_cast<int>(i));
  return rank;
}

}  // namespace

std::string lowercase_ascii(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

BpeVocab train_bpe(const std::vector<std::string>& corpus, int vocab_size) {
  if (vocab_size < kMinVocabSize)
    throw ConfigError("bpe vocab_size must be at least " + std::to_string(kMinVocabSize) +
                      ", got " + std::to_string(vocab_size));
  if (corpus.empty()) throw ConfigError("bpe training corpus is empty");

  BpeVocab vocab;
  vocab.target_vocab_size = vocab_size;
  vocab.token_bytes.resize(kFirstMergeId);
  for (int b = 0; b < 256; ++b) vocab.token_bytes[b] = std::string(1, static_cast<char>(b));
  // Specials expand to nothing; decode skips them anyway.

  // Dedupe words; counts weight the pair statistics. std::map keeps the
  // word order deterministic regardless of input order.
  std::map<std::string, long long> word_counts;
  for (const auto& doc : corpus)
    for (auto& w : split_words_lower(doc)) ++word_counts[w];
  if (word_counts.empty()) throw ConfigError("bpe training corpus has no words");

  struct Word {
    std::vector<int> toks;
    long long count;
  };
  std::vector<Word> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) {
    Word entry;
    entry.count = c;
    entry.toks.reserve(w.size());
    for (const unsigned char ch : w) entry.toks.push_back(ch);
    words.push_back(std::move(entry));
  }

  while (vocab.size() < vocab_size) {
    std::unordered_map<std::uint64_t, long long> pair_counts;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.toks.size(); ++i)
        pair_counts[pack_pair(w.toks[i], w.toks[i + 1])] += w.count;

    long long best_count = 0;
    int best_l = -1, best_r = -1;
    for (const auto& [key, count] : pair_counts) {
      const int l = static_cast<int>(key >> 32);
      const int r = static_cast<int>(key & 0xffffffffu);
      if (count < best_count) continue;
      if (count > best_count) {
        best_count = count;
        best_l = l;
        best_r = r;
        continue;
      }
      // Tie: lexicographically smaller (left bytes, right bytes) wins;
      // ids are the final tie-break since distinct tokens can share bytes.
      const auto cand = std::tie(vocab.token_bytes[l], vocab.token_bytes[r]);
      const auto best = std::tie(vocab.token_bytes[best_l], vocab.token_bytes[best_r]);
      if (cand < best || (cand == best && std::make_pair(l, r) < std::make_pair(best_l, best_r))) {
        best_l = l;
        best_r = r;
      }
    }
    if (best_count < 2) break;

    const int merged = vocab.size();
    vocab.merges.emplace_back(best_l, best_r);
    vocab.token_bytes.push_back(vocab.token_bytes[best_l] + vocab.token_bytes[best_r]);
    for (auto& w : words) apply_merge(w.toks, best_l, best_r, merged);
  }
  vocab.rank = build_rank_table(vocab);
  return vocab;
}

std::vector<int> encode(const std::string& text, const BpeVocab& vocab, int max_len) {
  std::unordered_map<std::uint64_t, int> local_rank;
  const auto* rank = &vocab.rank;
  if (vocab.rank.size() != vocab.merges.size()) {
    local_rank = build_rank_table(vocab);
    rank = &local_rank;
  }
  std::vector<int> out;
  out.reserve(text.size());

  std::size_t i = 0;
  std::vector<int> word;
  while (i < text.size()) {
    const bool ws = is_space_byte(static_cast<unsigned char>(text[i]));
    std::size_t j = i;
    while (j < text.size() && is_space_byte(static_cast<unsigned char>(text[j])) == ws) ++j;
    if (ws) {
      for (std::size_t p = i; p < j; ++p)
        out.push_back(static_cast<unsigned char>(text[p]));
    } else {
      word.clear();
      for (std::size_t p = i; p < j; ++p)
        word.push_back(static_cast<unsigned char>(text[p]));
      encode_word(word, vocab, *rank);
      out.insert(out.end(), word.begin(), word.end());
    }
    i = j;
  }
  if (max_len > 0 && out.size() > static_cast<std::size_t>(max_len))
    out.resize(static_cast<std::size_t>(max_len));
  return out;
}

std::string decode(const std::vector<int>& ids, const BpeVocab& vocab) {
  std::string out;
  for (const int id : ids) {
    if (id == kPadId || id == kClsId) continue;
    if (id < 0 || id >= vocab.size())
      throw std::out_of_range("bpe decode: token id " + std::to_string(id) +
                              " outside vocab of size " + std::to_string(vocab.size()));
    out += vocab.token_bytes[static_cast<std::size_t>(id)];
  }
  return out;
}

void save_vocab(const BpeVocab& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write bpe vocab to " + path);
  f << "presize-bpe v1\n";
  f << "target_vocab_size " << vocab.target_vocab_size << "\n";
  f << "pad " << kPadId << "\n";
  f << "cls " << kClsId << "\n";
  f << "merges " << vocab.merges.size() << "\n";
  for (const auto& [l, r] : vocab.merges) f << l << " " << r << "\n";
  if (!f) throw IoError("short write to " + path);
}

BpeVocab load_vocab(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read bpe vocab from " + path);
  std::string line;
  if (!std::getline(f, line) || line != "presize-bpe v1")
    throw ParseError(path + ": not a bpe vocab file (bad header)");

  BpeVocab vocab;
  vocab.token_bytes.resize(kFirstMergeId);
  for (int b = 0; b < 256; ++b) vocab.token_bytes[b] = std::string(1, static_cast<char>(b));

  std::size_t n_merges = 0;
  std::string key;
  while (f >> key) {
    if (key == "target_vocab_size") {
      f >> vocab.target_vocab_size;
    } else if (key == "pad" || key == "cls") {
      int id;
      f >> id;
      if ((key == "pad" && id != kPadId) || (key == "cls" && id != kClsId))
        throw ParseError(path + ": unexpected special token id");
    } else if (key == "merges") {
      f >> n_merges;
      break;
    } else {
      throw ParseError(path + ": unknown header field '" + key + "'");
    }
    if (!f) throw ParseError(path + ": truncated header");
  }
  if (!f) throw ParseError(path + ": missing merges section");

  vocab.merges.reserve(n_merges);
  for (std::size_t i = 0; i < n_merges; ++i) {
    int l, r;
    if (!(f >> l >> r)) throw ParseError(path + ": truncated merge list");
    const int limit = kFirstMergeId + static_cast<int>(i);
    if (l < 0 || l >= limit || r < 0 || r >= limit)
      throw ParseError(path + ": merge " + std::to_string(i) + " references unknown token");
    vocab.merges.emplace_back(l, r);
    vocab.token_bytes.push_back(vocab.token_bytes[l] + vocab.token_bytes[r]);
  }
  vocab.rank = build_rank_table(vocab);
  return vocab;
}

}  // namespace presize::bpe
