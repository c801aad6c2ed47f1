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
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mitvg/errors.hpp"

namespace mitvg {

enum class Precision { f32, f64 };

/// Every hyperparameter of the model and its training loop.
struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t heads = 8;
  std::size_t d_ff = 2048;
  std::size_t grounding_layers = 3;
  std::size_t encoder_layers = 3;
  std::size_t decoder_layers = 3;
  std::size_t max_caption_len = 40;
  std::size_t max_question_len = 20;
  std::size_t max_answer_len = 20;
  std::size_t vocab_min_count = 5;
  std::size_t feature_dim = 2048;  // V, width of one object feature row
  std::size_t warmup_steps = 4000;
  std::size_t steps = 100000;
  std::size_t grad_accum = 1;
  std::uint64_t seed = 1;
  Precision precision = Precision::f32;
  bool use_vg = true;
  bool tie_final_round = true;
  bool length_normalized = false;  // candidate scoring: mean instead of sum
  double dropout = 0.0;

  /// Longest token sequence any stream can produce (history Q SEP A is the
  /// longest), plus BOS/EOS.
  std::size_t max_positions() const {
    std::size_t hist = max_question_len + 1 + max_answer_len;
    std::size_t m = std::max({max_caption_len, hist, max_answer_len + 1});
    return m + 2;
  }

  void validate() const {
    if (heads == 0 || d_model % heads != 0) {
      throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                        std::to_string(heads));
    }
    if (max_caption_len < 1 || max_question_len < 1 || max_answer_len < 1) {
      throw ConfigError("truncation lengths must be >= 1");
    }
    if (d_ff == 0 || feature_dim == 0) throw ConfigError("d_ff and feature_dim must be positive");
    if (warmup_steps == 0) throw ConfigError("warmup_steps must be >= 1");
    if (grad_accum == 0) throw ConfigError("grad_accum must be >= 1");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
  }

  /// Published full-size model.
  static ModelConfig full() { return ModelConfig{}; }

  /// Desk-scale profile used for the synthetic benchmark.
  static ModelConfig toy() {
    ModelConfig c;
    c.d_model = 64;
    c.heads = 4;
    c.d_ff = 128;
    c.grounding_layers = 1;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.feature_dim = 64;
    c.warmup_steps = 200;
    c.steps = 500;
    return c;
  }

  /// Gradient-verification profile.
  static ModelConfig tiny() {
    ModelConfig c;
    c.d_model = 8;
    c.heads = 2;
    c.d_ff = 16;
    c.grounding_layers = 1;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.feature_dim = 6;
    c.warmup_steps = 10;
    c.steps = 10;
    c.precision = Precision::f64;
    return c;
  }

  static ModelConfig profile(const std::string& name) {
    if (name == "full") return full();
    if (name == "toy") return toy();
    if (name == "tiny") return tiny();
    throw ConfigError("unknown profile '" + name + "' (expected full, toy or tiny)");
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "d_model",         "heads",           "d_ff",           "grounding_layers",
      "encoder_layers",  "decoder_layers",  "max_caption_len", "max_question_len",
      "max_answer_len",  "vocab_min_count", "feature_dim",    "warmup_steps",
      "steps",           "grad_accum",      "seed",           "precision",
      "use_vg",          "tie_final_round", "length_normalized", "dropout"};
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace detail

/// Applies one `key = value` assignment.
inline void set_config_value(ModelConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_size;
  if (key == "d_model") c.d_model = parse_size(key, v);
  else if (key == "heads") c.heads = parse_size(key, v);
  else if (key == "d_ff") c.d_ff = parse_size(key, v);
  else if (key == "grounding_layers") c.grounding_layers = parse_size(key, v);
  else if (key == "encoder_layers") c.encoder_layers = parse_size(key, v);
  else if (key == "decoder_layers") c.decoder_layers = parse_size(key, v);
  else if (key == "max_caption_len") c.max_caption_len = parse_size(key, v);
  else if (key == "max_question_len") c.max_question_len = parse_size(key, v);
  else if (key == "max_answer_len") c.max_answer_len = parse_size(key, v);
  else if (key == "vocab_min_count") c.vocab_min_count = parse_size(key, v);
  else if (key == "feature_dim") c.feature_dim = parse_size(key, v);
  else if (key == "warmup_steps") c.warmup_steps = parse_size(key, v);
  else if (key == "steps") c.steps = parse_size(key, v);
  else if (key == "grad_accum") c.grad_accum = parse_size(key, v);
  else if (key == "seed") c.seed = parse_size(key, v);
  else if (key == "precision") {
    if (v == "f32") c.precision = Precision::f32;
    else if (v == "f64") c.precision = Precision::f64;
    else throw ConfigError("config key 'precision': expected f32 or f64, got '" + v + "'");
  } else if (key == "use_vg") c.use_vg = detail::parse_bool(key, v);
  else if (key == "tie_final_round") c.tie_final_round = detail::parse_bool(key, v);
  else if (key == "length_normalized") c.length_normalized = detail::parse_bool(key, v);
  else if (key == "dropout") {
    try {
      std::size_t used = 0;
      c.dropout = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("config key 'dropout': expected a number, got '" + v + "'");
    }
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

/// Parses the flat `key = value` format ('#' starts a comment).
///
/// A `profile = full|toy|tiny` line supplies defaults for every key not
/// given; without it, every key in config_keys() must be present.
inline ModelConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (entries.count(key)) throw ConfigError("config key '" + key + "' given twice");
    entries[key] = value;
  }
  ModelConfig c;
  if (auto it = entries.find("profile"); it != entries.end()) {
    c = ModelConfig::profile(it->second);
    entries.erase(it);
  } else {
    for (const auto& key : config_keys()) {
      if (!entries.count(key)) throw ConfigError("missing config key '" + key + "'");
    }
  }
  for (const auto& [key, value] : entries) set_config_value(c, key, value);
  c.validate();
  return c;
}

/// Inverse of parse_config: every key, in config_keys() order.
inline std::string format_config(const ModelConfig& c) {
  std::ostringstream os;
  os << "d_model = " << c.d_model << "\n"
     << "heads = " << c.heads << "\n"
     << "d_ff = " << c.d_ff << "\n"
     << "grounding_layers = " << c.grounding_layers << "\n"
     << "encoder_layers = " << c.encoder_layers << "\n"
     << "decoder_layers = " << c.decoder_layers << "\n"
     << "max_caption_len = " << c.max_caption_len << "\n"
     << "max_question_len = " << c.max_question_len << "\n"
     << "max_answer_len = " << c.max_answer_len << "\n"
     << "vocab_min_count = " << c.vocab_min_count << "\n"
     << "feature_dim = " << c.feature_dim << "\n"
     << "warmup_steps = " << c.warmup_steps << "\n"
     << "steps = " << c.steps << "\n"
     << "grad_accum = " << c.grad_accum << "\n"
     << "seed = " << c.seed << "\n"
     << "precision = " << (c.precision == Precision::f32 ? "f32" : "f64") << "\n"
     << "use_vg = " << (c.use_vg ? "true" : "false") << "\n"
     << "tie_final_round = " << (c.tie_final_round ? "true" : "false") << "\n"
     << "length_normalized = " << (c.length_normalized ? "true" : "false") << "\n"
     << "dropout = " << c.dropout << "\n";
  return os.str();
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"d_model", c.d_model},
                        {"heads", c.heads},
                        {"d_ff", c.d_ff},
                        {"grounding_layers", c.grounding_layers},
                        {"encoder_layers", c.encoder_layers},
                        {"decoder_layers", c.decoder_layers},
                        {"max_caption_len", c.max_caption_len},
                        {"max_question_len", c.max_question_len},
                        {"max_answer_len", c.max_answer_len},
                        {"vocab_min_count", c.vocab_min_count},
                        {"feature_dim", c.feature_dim},
                        {"warmup_steps", c.warmup_steps},
                        {"steps", c.steps},
                        {"grad_accum", c.grad_accum},
                        {"seed", c.seed},
                        {"precision", c.precision == Precision::f32 ? "f32" : "f64"},
                        {"use_vg", c.use_vg},
                        {"tie_final_round", c.tie_final_round},
                        {"length_normalized", c.length_normalized},
                        {"dropout", c.dropout}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.grounding_layers = j.at("grounding_layers").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.max_caption_len = j.at("max_caption_len").get<std::size_t>();
    c.max_question_len = j.at("max_question_len").get<std::size_t>();
    c.max_answer_len = j.at("max_answer_len").get<std::size_t>();
    c.vocab_min_count = j.at("vocab_min_count").get<std::size_t>();
    c.feature_dim = j.at("feature_dim").get<std::size_t>();
    c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.grad_accum = j.at("grad_accum").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto precision = j.at("precision").get<std::string>();
    if (precision != "f32" && precision != "f64") throw ConfigError("bad precision '" + precision + "'");
    c.precision = precision == "f64" ? Precision::f64 : Precision::f32;
    c.use_vg = j.at("use_vg").get<bool>();
    c.tie_final_round = j.at("tie_final_round").get<bool>();
    c.length_normalized = j.at("length_normalized").get<bool>();
    c.dropout = j.at("dropout").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad config record: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace mitvg
