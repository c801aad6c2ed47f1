// Copyright 2026 The MITVG Authors.
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

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mitvg/errors.hpp"

namespace mitvg {

/// Lowercases, spells out digits one word per digit, starts a new token at
/// each apostrophe ("it's" -> it 's) and splits every other ASCII
/// punctuation character into its own token.
inline std::vector<std::string> normalize_and_tokenize(std::string_view text) {
  static const char* kDigitWords[] = {"zero", "one", "two",   "three", "four",
                                      "five", "six", "seven", "eight", "nine"};
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c >= '0' && c <= '9') {
      flush();
      tokens.emplace_back(kDigitWords[c - '0']);
    } else if (c == '\'') {
      flush();
      current.push_back('\'');
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      current.push_back(static_cast<char>(c));  // UTF-8 bytes pass through
    }
  }
  flush();
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

/// Token <-> id map. Ids 0..4 are reserved for the special tokens.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kSep = 4;
  static constexpr std::size_t kNumSpecial = 5;

  static const std::vector<std::string>& specials() {
    static const std::vector<std::string> s = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
    return s;
  }

  Vocabulary() {
    for (const auto& s : specials()) push(s);
  }

  /// Keeps tokens seen at least `min_count` times, ordered by count
  /// descending then token ascending.
  static Vocabulary build(const std::vector<std::vector<std::string>>& texts, std::size_t min_count) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : texts)
      for (const auto& tok : t) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : counts) {
      if (n >= min_count && !is_special(tok)) kept.emplace_back(tok, n);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, n] : kept) v.push(tok);
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }

  std::size_t id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  std::string decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> words;
    for (auto i : ids) words.push_back(token(i));
    return join_tokens(words);
  }

  /// One token per line; line index is the id.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw DataError("failed writing vocabulary file " + path);
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary file " + path);
    Vocabulary v;
    v.tokens_.clear();
    v.ids_.clear();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (lineno <= kNumSpecial) {
        if (line != specials()[lineno - 1]) {
          throw DataError(path + ":" + std::to_string(lineno) + ": expected special token " +
                          specials()[lineno - 1]);
        }
      } else if (line.empty() || v.ids_.count(line)) {
        throw DataError(path + ":" + std::to_string(lineno) + ": empty or duplicate token");
      }
      v.push(line);
    }
    if (v.size() < kNumSpecial) throw DataError(path + ": vocabulary is missing special tokens");
    return v;
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  static bool is_special(const std::string& tok) {
    const auto& s = specials();
    return std::find(s.begin(), s.end(), tok) != s.end();
  }

  void push(const std::string& tok) {
    ids_[tok] = tokens_.size();
    tokens_.push_back(tok);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace mitvg
