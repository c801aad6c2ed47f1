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
 * @file checkpoint.hpp
 * @brief Parameter snapshots.
 *
 * Layout (little-endian):
 *   "MITV" | u16 version | u32 header_bytes | header JSON | float32 data
 *
 * The header carries the model config, vocabulary size, optimizer step and
 * a manifest of tensors {name, shape, offset, count}; offsets are bytes
 * from the start of the data section. Optimizer moments, when saved, are
 * stored as tensors named "adam.m/<param>" and "adam.v/<param>".
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mitvg/dataset.hpp"
#include "mitvg/train.hpp"

namespace mitvg {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointTensor {
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig config;
  std::size_t vocab_size = 0;
  std::size_t step = 0;
  std::vector<std::string> order;  // manifest order
  std::map<std::string, CheckpointTensor> tensors;

  void put(const std::string& name, Shape shape, std::vector<float> values) {
    if (!tensors.count(name)) order.push_back(name);
    tensors[name] = {std::move(shape), std::move(values)};
  }

  const CheckpointTensor& get(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint has no tensor '" + name + "'");
    return it->second;
  }

  bool has_optimizer_state() const { return step > 0 && !order.empty() && tensors.count("adam.m/" + order.front()); }
};

template <typename T>
Checkpoint make_checkpoint(const MitvgModel<T>& model, const Adam<T>* adam = nullptr) {
  Checkpoint ck;
  ck.config = model.config();
  ck.vocab_size = model.vocab_size();
  for (const auto& p : model.params().all()) {
    ck.put(p.name, p.tensor.shape(), std::vector<float>(p.tensor.values().begin(), p.tensor.values().end()));
  }
  if (adam) {
    ck.step = adam->steps();
    const auto& params = model.params().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& m = adam->first_moments()[i];
      const auto& v = adam->second_moments()[i];
      ck.put("adam.m/" + params[i].name, params[i].tensor.shape(), std::vector<float>(m.begin(), m.end()));
      ck.put("adam.v/" + params[i].name, params[i].tensor.shape(), std::vector<float>(v.begin(), v.end()));
    }
  }
  return ck;
}

inline std::string encode_checkpoint(const Checkpoint& ck) {
  nlohmann::ordered_json header;
  header["config"] = config_to_json(ck.config);
  header["vocab_size"] = ck.vocab_size;
  header["step"] = ck.step;
  auto manifest = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& name : ck.order) {
    const auto& t = ck.tensors.at(name);
    manifest.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size() * 4;
  }
  header["tensors"] = manifest;
  const std::string text = header.dump();

  std::string out = "MITV";
  out.push_back(static_cast<char>(kCheckpointVersion & 0xFF));
  out.push_back(static_cast<char>(kCheckpointVersion >> 8));
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& name : ck.order)
    for (float v : ck.tensors.at(name).values) detail::put_f32(out, v);
  return out;
}

/// Parses and validates a whole checkpoint before anything is returned.
inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& what = "checkpoint") {
  detail::ByteReader r(bytes, what);
  if (r.bytes(4) != "MITV") throw FormatError(what + ": bad magic (expected MITV)");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t header_len = r.u32();
  const std::string text = r.bytes(header_len);
  Checkpoint ck;
  const std::size_t data_start = r.position();
  try {
    const auto header = nlohmann::json::parse(text);
    ck.config = config_from_json(header.at("config"));
    ck.vocab_size = header.at("vocab_size").get<std::size_t>();
    ck.step = header.at("step").get<std::size_t>();
    std::size_t expected_offset = 0;
    for (const auto& entry : header.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      Shape shape = entry.at("shape").get<Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t count = entry.at("count").get<std::size_t>();
      if (shape.empty() || shape_numel(shape) != count || offset != expected_offset) {
        throw FormatError(what + ": inconsistent manifest entry '" + name + "'");
      }
      if (ck.tensors.count(name)) throw FormatError(what + ": duplicate tensor '" + name + "'");
      if (count > (bytes.size() - data_start) / 4 || offset > bytes.size() - data_start - count * 4) {
        throw FormatError(what + ": truncated data for tensor '" + name + "'");
      }
      std::vector<float> values(count);
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + data_start + offset;
      for (std::size_t i = 0; i < count; ++i, p += 4) {
        const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                   (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        std::memcpy(&values[i], &bits, 4);
      }
      ck.put(name, std::move(shape), std::move(values));
      expected_offset += count * 4;
    }
    if (data_start + expected_offset != bytes.size()) {
      throw FormatError(what + ": size mismatch (" + std::to_string(bytes.size() - data_start - expected_offset) +
                        " unexpected bytes)");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": bad header (" + e.what() + ")");
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const DataError& e) {
    throw FormatError(e.what());
  }
  return decode_checkpoint(bytes, path);
}

/// Copies checkpoint values into `model` (widening to T). Every parameter
/// must be present with a matching shape; nothing is written otherwise.
template <typename T>
void apply_checkpoint(MitvgModel<T>& model, const Checkpoint& ck, Adam<T>* adam = nullptr) {
  if (ck.vocab_size != model.vocab_size()) {
    throw FormatError("checkpoint vocabulary " + std::to_string(ck.vocab_size) + " != model vocabulary " +
                      std::to_string(model.vocab_size()));
  }
  for (const auto& p : model.params().all()) {
    const auto& t = ck.get(p.name);
    if (t.shape != p.tensor.shape()) {
      throw FormatError("checkpoint tensor '" + p.name + "' has shape " + shape_string(t.shape) + ", model expects " +
                        shape_string(p.tensor.shape()));
    }
    if (adam && ck.step > 0) {
      ck.get("adam.m/" + p.name);
      ck.get("adam.v/" + p.name);
    }
  }
  const auto& params = model.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> t = params[i].tensor;
    const auto& src = ck.get(params[i].name).values;
    std::copy(src.begin(), src.end(), t.mutable_values().begin());
    if (adam && ck.step > 0) {
      const auto& m = ck.get("adam.m/" + params[i].name).values;
      const auto& v = ck.get("adam.v/" + params[i].name).values;
      adam->first_moments()[i].assign(m.begin(), m.end());
      adam->second_moments()[i].assign(v.begin(), v.end());
    }
  }
  if (adam) adam->set_steps(ck.step);
}

}  // namespace mitvg
