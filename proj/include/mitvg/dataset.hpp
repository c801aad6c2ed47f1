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

/**
 * @file dataset.hpp
 * @brief Dialogue records, object features and their on-disk formats.
 *
 * Dialogues are JSON lines:
 *   {"image_id", "caption", "rounds": [{"question", "answer"?, "grounding",
 *    "candidates"?, "gt_index"?, "relevance"?}]}
 *
 * Object features are a little-endian binary file:
 *   "MITF" | u32 image_count | per image: u64 image_id, u32 K, u32 V,
 *   K*V float32 values.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mitvg/config.hpp"
#include "mitvg/errors.hpp"
#include "mitvg/text.hpp"

namespace mitvg {

struct CandidateSet {
  std::vector<std::vector<std::string>> answers;
  std::size_t gt_index = 0;
  std::vector<double> relevance;  // empty when absent

  bool operator==(const CandidateSet&) const = default;
};

struct DialogueRound {
  std::vector<std::string> question;
  std::optional<std::vector<std::string>> answer;
  std::vector<std::size_t> grounding;  // object indices; empty = whole image
  std::optional<CandidateSet> candidates;

  bool operator==(const DialogueRound&) const = default;
};

struct DialogueExample {
  std::uint64_t image_id = 0;
  std::vector<std::string> caption;
  std::vector<DialogueRound> rounds;  // rounds[i - 1] is round i

  bool operator==(const DialogueExample&) const = default;
};

/// Object-level features of one image, [objects x dim] row-major.
struct ImageFeatures {
  std::uint64_t image_id = 0;
  std::size_t objects = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t k) const {
    return std::span<const float>(values).subspan(k * dim, dim);
  }
  bool operator==(const ImageFeatures&) const = default;
};

class FeatureStore {
 public:
  void add(ImageFeatures f) {
    if (index_.count(f.image_id)) {
      throw DataError("duplicate image id " + std::to_string(f.image_id) + " in feature store");
    }
    index_[f.image_id] = images_.size();
    images_.push_back(std::move(f));
  }

  const ImageFeatures* find(std::uint64_t id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &images_[it->second];
  }

  const ImageFeatures& at(std::uint64_t id) const {
    auto* f = find(id);
    if (!f) throw DataError("no features for image " + std::to_string(id));
    return *f;
  }

  const std::vector<ImageFeatures>& images() const { return images_; }
  std::size_t size() const { return images_.size(); }

  bool operator==(const FeatureStore& o) const { return images_ == o.images_; }

 private:
  std::vector<ImageFeatures> images_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Feature binary format

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

/// Bounds-checked little-endian reader over an in-memory buffer.
class ByteReader {
 public:
  ByteReader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " more)");
    }
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(little(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little(4)); }
  std::uint64_t u64() { return little(8); }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

 private:
  std::uint64_t little(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }

  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace detail

inline std::string encode_features(const FeatureStore& store) {
  std::string out = "MITF";
  detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& img : store.images()) {
    detail::put_u64(out, img.image_id);
    detail::put_u32(out, static_cast<std::uint32_t>(img.objects));
    detail::put_u32(out, static_cast<std::uint32_t>(img.dim));
    for (float v : img.values) detail::put_f32(out, v);
  }
  return out;
}

inline FeatureStore decode_features(const std::string& bytes, const std::string& what = "features") {
  detail::ByteReader r(bytes, what);
  if (r.bytes(4) != "MITF") throw FormatError(what + ": bad magic (expected MITF)");
  const std::uint32_t count = r.u32();
  FeatureStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    ImageFeatures img;
    img.image_id = r.u64();
    img.objects = r.u32();
    img.dim = r.u32();
    if (img.objects == 0 || img.dim == 0) {
      throw FormatError(what + ": image " + std::to_string(img.image_id) + " has K=" +
                        std::to_string(img.objects) + ", V=" + std::to_string(img.dim));
    }
    const std::uint64_t n = static_cast<std::uint64_t>(img.objects) * img.dim;
    r.need(n * 4);  // before allocating
    img.values.resize(n);
    for (auto& v : img.values) {
      v = r.f32();
      if (!std::isfinite(v)) {
        throw FormatError(what + ": non-finite feature in image " + std::to_string(img.image_id));
      }
    }
    try {
      store.add(std::move(img));
    } catch (const DataError& e) {
      throw FormatError(what + ": " + e.what());
    }
  }
  if (r.remaining() != 0) throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
  return store;
}

inline void save_features(const std::string& path, const FeatureStore& store) {
  detail::write_file(path, encode_features(store));
}

inline FeatureStore load_features(const std::string& path) {
  return decode_features(detail::read_file(path), path);
}

// ---------------------------------------------------------------------------
// Dialogue JSON lines

struct TruncationLimits {
  std::size_t caption = 40;
  std::size_t question = 20;
  std::size_t answer = 20;

  static TruncationLimits from(const ModelConfig& c) {
    return {c.max_caption_len, c.max_question_len, c.max_answer_len};
  }
};

inline nlohmann::ordered_json example_to_json(const DialogueExample& ex) {
  nlohmann::ordered_json j;
  j["image_id"] = ex.image_id;
  j["caption"] = join_tokens(ex.caption);
  auto rounds = nlohmann::ordered_json::array();
  for (const auto& r : ex.rounds) {
    nlohmann::ordered_json jr;
    jr["question"] = join_tokens(r.question);
    if (r.answer) jr["answer"] = join_tokens(*r.answer);
    jr["grounding"] = r.grounding;
    if (r.candidates) {
      auto cands = nlohmann::ordered_json::array();
      for (const auto& c : r.candidates->answers) cands.push_back(join_tokens(c));
      jr["candidates"] = cands;
      jr["gt_index"] = r.candidates->gt_index;
      if (!r.candidates->relevance.empty()) jr["relevance"] = r.candidates->relevance;
    }
    rounds.push_back(jr);
  }
  j["rounds"] = rounds;
  return j;
}

inline std::string encode_dataset(const std::vector<DialogueExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += example_to_json(ex).dump();
    out.push_back('\n');
  }
  return out;
}

namespace detail {

struct FieldError {
  std::string field;
  std::string message;
};

inline std::vector<std::string> tokenize_field(const nlohmann::json& j, const std::string& field,
                                               std::size_t limit) {
  if (!j.is_string()) throw FieldError{field, "expected a string"};
  auto toks = normalize_and_tokenize(j.get<std::string>());
  if (toks.size() > limit) toks.resize(limit);
  return toks;
}

inline std::size_t index_field(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number_unsigned()) throw FieldError{field, "expected a non-negative integer"};
  return j.get<std::size_t>();
}

inline DialogueExample parse_example(const nlohmann::json& j, const TruncationLimits& limits,
                                     const FeatureStore* features) {
  if (!j.is_object()) throw FieldError{"<record>", "expected a JSON object"};
  DialogueExample ex;
  if (!j.contains("image_id") || !j["image_id"].is_number_unsigned()) {
    throw FieldError{"image_id", "missing or not a non-negative integer"};
  }
  ex.image_id = j["image_id"].get<std::uint64_t>();
  if (!j.contains("caption")) throw FieldError{"caption", "missing"};
  ex.caption = tokenize_field(j["caption"], "caption", limits.caption);
  if (ex.caption.empty()) throw FieldError{"caption", "empty after tokenization"};
  if (!j.contains("rounds") || !j["rounds"].is_array()) throw FieldError{"rounds", "missing or not an array"};

  const ImageFeatures* img = nullptr;
  if (features) {
    img = features->find(ex.image_id);
    if (!img) throw FieldError{"image_id", "no features for image " + std::to_string(ex.image_id)};
  }
  std::size_t idx = 0;
  for (const auto& jr : j["rounds"]) {
    const std::string at = "rounds[" + std::to_string(idx) + "]";
    if (!jr.is_object()) throw FieldError{at, "expected an object"};
    DialogueRound r;
    if (!jr.contains("question")) throw FieldError{at + ".question", "missing"};
    r.question = tokenize_field(jr["question"], at + ".question", limits.question);
    if (r.question.empty()) throw FieldError{at + ".question", "empty after tokenization"};
    if (jr.contains("answer")) r.answer = tokenize_field(jr["answer"], at + ".answer", limits.answer);
    if (jr.contains("grounding")) {
      if (!jr["grounding"].is_array()) throw FieldError{at + ".grounding", "expected an array"};
      for (const auto& g : jr["grounding"]) {
        std::size_t k = index_field(g, at + ".grounding");
        if (img && k >= img->objects) {
          throw FieldError{at + ".grounding", "object index " + std::to_string(k) + " >= K=" +
                                                  std::to_string(img->objects) + " (round " +
                                                  std::to_string(idx + 1) + ")"};
        }
        r.grounding.push_back(k);
      }
    }
    if (jr.contains("candidates")) {
      if (!jr["candidates"].is_array() || jr["candidates"].empty()) {
        throw FieldError{at + ".candidates", "expected a non-empty array"};
      }
      CandidateSet cs;
      for (const auto& c : jr["candidates"]) {
        cs.answers.push_back(tokenize_field(c, at + ".candidates", limits.answer));
      }
      if (!jr.contains("gt_index")) throw FieldError{at + ".gt_index", "missing"};
      cs.gt_index = index_field(jr["gt_index"], at + ".gt_index");
      if (cs.gt_index >= cs.answers.size()) throw FieldError{at + ".gt_index", "out of range"};
      if (jr.contains("relevance")) {
        if (!jr["relevance"].is_array() || jr["relevance"].size() != cs.answers.size()) {
          throw FieldError{at + ".relevance", "expected one value per candidate"};
        }
        for (const auto& v : jr["relevance"]) {
          if (!v.is_number()) throw FieldError{at + ".relevance", "expected numbers"};
          double x = v.get<double>();
          if (!(x >= 0.0 && x <= 1.0)) throw FieldError{at + ".relevance", "value outside [0,1]"};
          cs.relevance.push_back(x);
        }
      }
      r.candidates = std::move(cs);
    }
    ex.rounds.push_back(std::move(r));
    ++idx;
  }
  return ex;
}

}  // namespace detail

/// Parses JSON-lines text. Every error names the 1-based line and field.
inline std::vector<DialogueExample> decode_dataset(const std::string& text, const TruncationLimits& limits,
                                                   const FeatureStore* features = nullptr,
                                                   const std::string& what = "dataset") {
  std::vector<DialogueExample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(what + ":" + std::to_string(lineno) + ": field <record>: invalid JSON (" + e.what() + ")");
    }
    try {
      out.push_back(detail::parse_example(j, limits, features));
    } catch (const detail::FieldError& e) {
      throw DataError(what + ":" + std::to_string(lineno) + ": field " + e.field + ": " + e.message);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(what + ":" + std::to_string(lineno) + ": field <record>: " + e.what());
    }
  }
  return out;
}

inline void save_dataset(const std::string& path, const std::vector<DialogueExample>& examples) {
  detail::write_file(path, encode_dataset(examples));
}

inline std::vector<DialogueExample> load_dataset(const std::string& path, const TruncationLimits& limits,
                                                 const FeatureStore* features = nullptr) {
  return decode_dataset(detail::read_file(path), limits, features, path);
}

/// Caption, questions and answers: the text the vocabulary is built from.
inline std::vector<std::vector<std::string>> dialogue_texts(const std::vector<DialogueExample>& examples) {
  std::vector<std::vector<std::string>> texts;
  for (const auto& ex : examples) {
    texts.push_back(ex.caption);
    for (const auto& r : ex.rounds) {
      texts.push_back(r.question);
      if (r.answer) texts.push_back(*r.answer);
    }
  }
  return texts;
}

}  // namespace mitvg
