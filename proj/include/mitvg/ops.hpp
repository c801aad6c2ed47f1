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
 * @file ops.hpp
 * @brief Differentiable primitives over Tensor.
 *
 * Every primitive computes its forward value eagerly and, when a tape is
 * active and an operand requires a gradient, records a backward rule that
 * accumulates into the operands' grad buffers. Broadcasting is never
 * implicit; add_row_bias is the one explicit vector-over-rows form.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mitvg/tensor.hpp"

namespace mitvg {

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Wraps freshly computed values into an output tensor and, if recording,
// registers `make_backward(out_storage)` on the active tape.
template <typename T, typename MakeBackward>
Tensor<T> finish(Shape shape, std::vector<T> values,
                 std::initializer_list<const Tensor<T>*> inputs,
                 MakeBackward&& make_backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  Tape<T>* tape = Tape<T>::active();
  if (tape && any_requires_grad<T>(inputs)) {
    out.set_requires_grad(true);
    std::vector<StoragePtr<T>> ins;
    ins.reserve(inputs.size());
    for (auto* t : inputs) ins.push_back(t->storage());
    tape->record(std::move(ins), out.storage(), make_backward(out.storage()));
  }
  return out;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
  require(a.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
inline void axis_split(const Shape& shape, std::size_t axis, std::size_t& outer,
                       std::size_t& extent, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto sa = a.storage(), sb = b.storage();
  return detail::finish<T>(a.shape(), std::move(out), {&a, &b}, [sa, sb](StoragePtr<T> o) {
    return [sa, sb, o] {
      for (auto* s : {sa.get(), sb.get()}) {
        if (!s->requires_grad) continue;
        auto& g = s->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    };
  });
}

template <typename T>
Tensor<T> subtract(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "subtract");
  std::vector<T> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto sa = a.storage(), sb = b.storage();
  return detail::finish<T>(a.shape(), std::move(out), {&a, &b}, [sa, sb](StoragePtr<T> o) {
    return [sa, sb, o] {
      if (sa->requires_grad) {
        auto& g = sa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (sb->requires_grad) {
        auto& g = sb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  });
}

/// Elementwise (Hadamard) product.
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "hadamard");
  std::vector<T> out(a.numel());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto sa = a.storage(), sb = b.storage();
  return detail::finish<T>(a.shape(), std::move(out), {&a, &b}, [sa, sb](StoragePtr<T> o) {
    return [sa, sb, o] {
      if (sa->requires_grad) {
        auto& g = sa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * sb->values[i];
      }
      if (sb->requires_grad) {
        auto& g = sb->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * sa->values[i];
      }
    };
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  auto sa = a.storage();
  return detail::finish<T>(a.shape(), std::move(out), {&a}, [sa, factor](StoragePtr<T> o) {
    return [sa, o, factor] {
      auto& g = sa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * factor;
    };
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    T x = av[i];
    // Split by sign so exp never overflows.
    out[i] = x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  auto sa = a.storage();
  return detail::finish<T>(a.shape(), std::move(out), {&a}, [sa](StoragePtr<T> o) {
    return [sa, o] {
      auto& g = sa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        T y = o->values[i];
        g[i] += o->grad[i] * y * (T(1) - y);
      }
    };
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  auto sa = a.storage();
  return detail::finish<T>(a.shape(), std::move(out), {&a}, [sa](StoragePtr<T> o) {
    return [sa, o] {
      auto& g = sa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (sa->values[i] > T(0)) g[i] += o->grad[i];
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  detail::require(shape_numel(shape) == a.numel(),
                  "reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  std::vector<T> out(a.values().begin(), a.values().end());
  auto sa = a.storage();
  return detail::finish<T>(std::move(shape), std::move(out), {&a}, [sa](StoragePtr<T> o) {
    return [sa, o] {
      auto& g = sa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  auto sa = a.storage();
  return detail::finish<T>({c, r}, std::move(out), {&a}, [sa, r, c](StoragePtr<T> o) {
    return [sa, o, r, c] {
      auto& g = sa->grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o->grad[j * r + i];
    };
  });
}

/// Concatenates along `axis`; all other dimensions must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  detail::require(axis < first.size(), "concat: axis " + std::to_string(axis) +
                                           " out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    detail::require(s.size() == first.size(), "concat: rank mismatch " + shape_string(first) +
                                                  " vs " + shape_string(s));
    for (std::size_t d = 0; d < s.size(); ++d) {
      detail::require(d == axis || s[d] == first[d],
                      "concat: shape mismatch " + shape_string(first) + " vs " + shape_string(s));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer, extent, inner;
  detail::axis_split(out_shape, axis, outer, extent, inner);
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * chunk, chunk, out.begin() + o * extent * inner + offset);
    }
    offset += chunk;
  }
  Tensor<T> result(out_shape, std::move(out));
  Tape<T>* tape = Tape<T>::active();
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  if (tape && needs) {
    result.set_requires_grad(true);
    std::vector<StoragePtr<T>> ins;
    for (const auto& p : parts) ins.push_back(p.storage());
    auto o = result.storage();
    tape->record(ins, o, [ins, o, outer, extent, inner, axis] {
      std::size_t off = 0;
      for (const auto& s : ins) {
        const std::size_t chunk = s->shape[axis] * inner;
        if (s->requires_grad) {
          auto& g = s->grad_buffer();
          for (std::size_t k = 0; k < outer; ++k)
            for (std::size_t i = 0; i < chunk; ++i) g[k * chunk + i] += o->grad[k * extent * inner + off + i];
        }
        off += chunk;
      }
    });
  }
  return result;
}

/// Row lookup: out[i] = table[ids[i]]. Embedding lookup and object selection.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  detail::require_matrix(table, "gather_rows");
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  const std::size_t n = table.rows(), c = table.cols();
  std::vector<T> out(ids.size() * c);
  auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= n) {
      throw ContractError("gather_rows: index " + std::to_string(ids[i]) + " out of range for " +
                          std::to_string(n) + " rows");
    }
    std::copy_n(tv.begin() + ids[i] * c, c, out.begin() + i * c);
  }
  auto st = table.storage();
  return detail::finish<T>({ids.size(), c}, std::move(out), {&table}, [st, ids, c](StoragePtr<T> o) {
    return [st, o, ids, c] {
      auto& g = st->grad_buffer();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) g[ids[i] * c + j] += o->grad[i * c + j];
    };
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Matrix product [m x k] . [k x n] -> [m x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
                  "matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(m * n, T(0));
  const T* A = a.values().data();
  const T* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  auto sa = a.storage(), sb = b.storage();
  return detail::finish<T>({m, n}, std::move(out), {&a, &b}, [sa, sb, m, k, n](StoragePtr<T> o) {
    return [sa, sb, o, m, k, n] {
      const T* G = o->grad.data();
      if (sa->requires_grad) {
        // dA = dC . B^T
        T* gA = sa->grad_buffer().data();
        const T* B = sb->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
            gA[i * k + p] += acc;
          }
      }
      if (sb->requires_grad) {
        // dB = A^T . dC
        T* gB = sb->grad_buffer().data();
        const T* A = sa->values.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += aip * G[i * n + j];
          }
      }
    };
  });
}

/// x[r, :] + bias for every row r.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_matrix(x, "add_row_bias");
  detail::require(bias.rank() == 1 && bias.numel() == x.cols(),
                  "add_row_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                      shape_string(x.shape()));
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<T> out(x.numel());
  auto xv = x.values();
  auto bv = bias.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] + bv[j];
  auto sx = x.storage(), sb = bias.storage();
  return detail::finish<T>(x.shape(), std::move(out), {&x, &bias}, [sx, sb, r, c](StoragePtr<T> o) {
    return [sx, sb, o, r, c] {
      if (sx->requires_grad) {
        auto& g = sx->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (sb->requires_grad) {
        auto& g = sb->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[j] += o->grad[i * c + j];
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.values()) total += v;
  auto sa = a.storage();
  return detail::finish<T>({1}, {total}, {&a}, [sa](StoragePtr<T> o) {
    return [sa, o] {
      auto& g = sa->grad_buffer();
      for (auto& x : g) x += o->grad[0];
    };
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.values()) total += v;
  const T n = static_cast<T>(a.numel());
  auto sa = a.storage();
  return detail::finish<T>({1}, {total / n}, {&a}, [sa, n](StoragePtr<T> o) {
    return [sa, o, n] {
      auto& g = sa->grad_buffer();
      for (auto& x : g) x += o->grad[0] / n;
    };
  });
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax along `axis` with max-subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  detail::require(axis < x.rank(), "softmax: axis " + std::to_string(axis) + " invalid for " +
                                       shape_string(x.shape()));
  std::size_t outer, extent, inner;
  detail::axis_split(x.shape(), axis, outer, extent, inner);
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < extent; ++e) mx = std::max(mx, xv[base + e * inner]);
      T total = 0;
      for (std::size_t e = 0; e < extent; ++e) {
        T v = std::exp(xv[base + e * inner] - mx);
        out[base + e * inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= total;
    }
  auto sx = x.storage();
  return detail::finish<T>(x.shape(), std::move(out), {&x},
                           [sx, outer, extent, inner](StoragePtr<T> o) {
    return [sx, o, outer, extent, inner] {
      auto& g = sx->grad_buffer();
      for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = ou * extent * inner + in;
          T dot = 0;
          for (std::size_t e = 0; e < extent; ++e) {
            const std::size_t i = base + e * inner;
            dot += o->grad[i] * o->values[i];
          }
          for (std::size_t e = 0; e < extent; ++e) {
            const std::size_t i = base + e * inner;
            g[i] += o->values[i] * (o->grad[i] - dot);
          }
        }
    };
  });
}

/// log(softmax(x)) computed as x - max - log(sum(exp(x - max))).
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  detail::require(axis < x.rank(), "log_softmax: axis " + std::to_string(axis) +
                                       " invalid for " + shape_string(x.shape()));
  std::size_t outer, extent, inner;
  detail::axis_split(x.shape(), axis, outer, extent, inner);
  std::vector<T> out(x.numel());
  auto xv = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * extent * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < extent; ++e) mx = std::max(mx, xv[base + e * inner]);
      T total = 0;
      for (std::size_t e = 0; e < extent; ++e) total += std::exp(xv[base + e * inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] = xv[base + e * inner] - lse;
    }
  auto sx = x.storage();
  return detail::finish<T>(x.shape(), std::move(out), {&x},
                           [sx, outer, extent, inner](StoragePtr<T> o) {
    return [sx, o, outer, extent, inner] {
      auto& g = sx->grad_buffer();
      for (std::size_t ou = 0; ou < outer; ++ou)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = ou * extent * inner + in;
          T total = 0;
          for (std::size_t e = 0; e < extent; ++e) total += o->grad[base + e * inner];
          for (std::size_t e = 0; e < extent; ++e) {
            const std::size_t i = base + e * inner;
            g[i] += o->grad[i] - std::exp(o->values[i]) * total;
          }
        }
    };
  });
}

/// Row-wise layer normalization: gain * (x - mean) / sqrt(var + eps) + bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  detail::require_matrix(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  detail::require(gain.numel() == c && bias.numel() == c,
                  "layer_norm: gain/bias width does not match " + shape_string(x.shape()));
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(r);
  auto xv = x.values();
  auto gv = gain.values();
  auto bv = bias.values();
  for (std::size_t i = 0; i < r; ++i) {
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
    mu /= static_cast<T>(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) {
      T d = xv[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(c);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  auto sx = x.storage(), sg = gain.storage(), sb = bias.storage();
  return detail::finish<T>(
      x.shape(), std::move(out), {&x, &gain, &bias},
      [sx, sg, sb, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](StoragePtr<T> o) mutable {
        return [sx, sg, sb, o, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
          const T* G = o->grad.data();
          if (sg->requires_grad) {
            auto& g = sg->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < c; ++j) g[j] += G[i * c + j] * xhat[i * c + j];
          }
          if (sb->requires_grad) {
            auto& g = sb->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < c; ++j) g[j] += G[i * c + j];
          }
          if (sx->requires_grad) {
            auto& g = sx->grad_buffer();
            const T inv_c = T(1) / static_cast<T>(c);
            for (std::size_t i = 0; i < r; ++i) {
              T m1 = 0, m2 = 0;
              for (std::size_t j = 0; j < c; ++j) {
                T dxh = G[i * c + j] * sg->values[j];
                m1 += dxh;
                m2 += dxh * xhat[i * c + j];
              }
              m1 *= inv_c;
              m2 *= inv_c;
              for (std::size_t j = 0; j < c; ++j) {
                T dxh = G[i * c + j] * sg->values[j];
                g[i * c + j] += inv_std[i] * (dxh - m1 - xhat[i * c + j] * m2);
              }
            }
          }
        };
      });
}

// ---------------------------------------------------------------------------
// Attention

/// Additive score applied to disallowed attention positions.
inline constexpr double kMaskedScore = -1e9;

/// Boolean attention mask, row-major [queries x keys]; true = may attend.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> allowed;

  static AttentionMask causal(std::size_t n) {
    AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) m.allowed[i * n + j] = 1;
    return m;
  }
};

/// Optional sink for the attention weights of one call, [heads][Lq x Lk].
template <typename T>
struct AttentionProbe {
  std::vector<std::vector<T>> weights;
  std::size_t queries = 0;
  std::size_t keys = 0;
};

/// Multi-head scaled dot-product attention over already-projected inputs.
/// q: [Lq x M], k, v: [Lk x M]; head h uses columns [h*dk, (h+1)*dk).
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, const AttentionMask* mask = nullptr,
                    AttentionProbe<T>* probe = nullptr) {
  detail::require_matrix(q, "attention");
  detail::require_matrix(k, "attention");
  detail::require_matrix(v, "attention");
  const std::size_t lq = q.rows(), lk = k.rows(), m = q.cols();
  detail::require(k.cols() == m && v.cols() == m,
                  "attention: width mismatch " + shape_string(q.shape()) + ", " +
                      shape_string(k.shape()) + ", " + shape_string(v.shape()));
  detail::require(v.rows() == lk, "attention: keys " + shape_string(k.shape()) +
                                      " and values " + shape_string(v.shape()) + " differ in length");
  detail::require(heads > 0 && m % heads == 0,
                  "attention: width " + std::to_string(m) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (mask) {
    detail::require(mask->queries == lq && mask->keys == lk && mask->allowed.size() == lq * lk,
                    "attention: mask " + std::to_string(mask->queries) + "x" +
                        std::to_string(mask->keys) + " does not fit scores " + std::to_string(lq) +
                        "x" + std::to_string(lk));
  }
  const std::size_t dk = m / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dk));
  const T* Q = q.values().data();
  const T* K = k.values().data();
  const T* V = v.values().data();
  std::vector<T> probs(heads * lq * lk);
  std::vector<T> out(lq * m, T(0));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dk;
    T* P = probs.data() + h * lq * lk;
    for (std::size_t i = 0; i < lq; ++i) {
      T* prow = P + i * lk;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < lk; ++j) {
        T s = 0;
        for (std::size_t d = 0; d < dk; ++d) s += Q[i * m + c0 + d] * K[j * m + c0 + d];
        s *= inv_sqrt;
        if (mask && !mask->allowed[i * lk + j]) s += static_cast<T>(kMaskedScore);
        prow[j] = s;
        mx = std::max(mx, s);
      }
      T total = 0;
      for (std::size_t j = 0; j < lk; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        total += prow[j];
      }
      for (std::size_t j = 0; j < lk; ++j) prow[j] /= total;
      T* orow = out.data() + i * m + c0;
      for (std::size_t j = 0; j < lk; ++j) {
        const T p = prow[j];
        const T* vrow = V + j * m + c0;
        for (std::size_t d = 0; d < dk; ++d) orow[d] += p * vrow[d];
      }
    }
  }
  if (probe) {
    probe->queries = lq;
    probe->keys = lk;
    probe->weights.assign(heads, {});
    for (std::size_t h = 0; h < heads; ++h)
      probe->weights[h].assign(probs.begin() + h * lq * lk, probs.begin() + (h + 1) * lq * lk);
  }
  auto sq = q.storage(), sk = k.storage(), sv = v.storage();
  return detail::finish<T>(
      {lq, m}, std::move(out), {&q, &k, &v},
      [sq, sk, sv, lq, lk, m, heads, dk, inv_sqrt, probs = std::move(probs)](StoragePtr<T> o) mutable {
        return [sq, sk, sv, o, lq, lk, m, heads, dk, inv_sqrt, probs = std::move(probs)] {
          const T* G = o->grad.data();
          const T* Q = sq->values.data();
          const T* K = sk->values.data();
          const T* V = sv->values.data();
          T* gQ = sq->requires_grad ? sq->grad_buffer().data() : nullptr;
          T* gK = sk->requires_grad ? sk->grad_buffer().data() : nullptr;
          T* gV = sv->requires_grad ? sv->grad_buffer().data() : nullptr;
          std::vector<T> dS(lk);
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dk;
            const T* P = probs.data() + h * lq * lk;
            for (std::size_t i = 0; i < lq; ++i) {
              const T* prow = P + i * lk;
              const T* grow = G + i * m + c0;
              T dot = 0;
              for (std::size_t j = 0; j < lk; ++j) {
                T dp = 0;
                for (std::size_t d = 0; d < dk; ++d) dp += grow[d] * V[j * m + c0 + d];
                dS[j] = dp;
                dot += dp * prow[j];
                if (gV) {
                  for (std::size_t d = 0; d < dk; ++d) gV[j * m + c0 + d] += prow[j] * grow[d];
                }
              }
              for (std::size_t j = 0; j < lk; ++j) {
                const T ds = prow[j] * (dS[j] - dot) * inv_sqrt;
                if (ds == T(0)) continue;
                if (gQ) {
                  for (std::size_t d = 0; d < dk; ++d) gQ[i * m + c0 + d] += ds * K[j * m + c0 + d];
                }
                if (gK) {
                  for (std::size_t d = 0; d < dk; ++d) gK[j * m + c0 + d] += ds * Q[i * m + c0 + d];
                }
              }
            }
          }
        };
      });
}

// ---------------------------------------------------------------------------
// Losses

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits),
/// skipping positions whose target equals `ignore`.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& targets,
                                std::optional<std::size_t> ignore = std::nullopt) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  const std::size_t r = logits.rows(), c = logits.cols();
  detail::require(targets.size() == r, "softmax_cross_entropy: " + std::to_string(targets.size()) +
                                           " targets for " + shape_string(logits.shape()));
  auto lv = logits.values();
  std::vector<T> probs(lv.size());
  T total = 0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] >= c) {
      throw ContractError("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                          " outside " + std::to_string(c) + " classes");
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(lv[i * c + j] - mx);
      s += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    if (ignore && targets[i] == *ignore) continue;
    total -= lv[i * c + targets[i]] - mx - std::log(s);
    ++counted;
  }
  if (counted == 0) throw ContractError("softmax_cross_entropy: every position is ignored");
  const T n = static_cast<T>(counted);
  auto sl = logits.storage();
  return detail::finish<T>(
      {1}, {total / n}, {&logits},
      [sl, r, c, n, targets, ignore, probs = std::move(probs)](StoragePtr<T> o) mutable {
        return [sl, o, r, c, n, targets, ignore, probs = std::move(probs)] {
          auto& g = sl->grad_buffer();
          const T scale = o->grad[0] / n;
          for (std::size_t i = 0; i < r; ++i) {
            if (ignore && targets[i] == *ignore) continue;
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += scale * probs[i * c + j];
            g[i * c + targets[i]] -= scale;
          }
        };
      });
}

}  // namespace mitvg
