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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "support.hpp"

namespace mitvg {
namespace {

using testing::as_double;
using testing::max_abs_diff;
using testing::random_tensor;
using D = Tensor<double>;

TEST(Tensor, RejectsMismatchedValueCount) {
  EXPECT_THROW(D({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(D({0, 2}, {}), ShapeError);
}

TEST(Tensor, ReshapeRoundTripsRowMajor) {
  std::mt19937_64 rng(1);
  D x = random_tensor<double>({3, 4}, rng);
  D y = reshape(reshape(x, {4, 3}), {3, 4});
  EXPECT_EQ(as_double(x), as_double(y));
  EXPECT_THROW(reshape(x, {5, 2}), ShapeError);
}

TEST(Matmul, IdentityAndProjection) {
  D eye = D::matrix({{1, 0}, {0, 1}});
  D a = D::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(as_double(matmul(eye, a)), (std::vector<double>{1, 2, 3, 4}));
  D p = D::matrix({{1, 0}, {0, 0}});
  D b = D::matrix({{5}, {7}});
  EXPECT_EQ(as_double(matmul(p, b)), (std::vector<double>{5, 0}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    D a = random_tensor<double>({3, 4}, rng);
    D b = random_tensor<double>({4, 2}, rng);
    auto want = testing::naive_matmul(as_double(a), as_double(b), 3, 4, 2);
    EXPECT_LT(max_abs_diff(as_double(matmul(a, b)), want), 1e-12);
  }
}

TEST(Matmul, MismatchNamesBothShapes) {
  D a = D::zeros({2, 3});
  D b = D::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x3]", msg.find("[2x3]") + 1), std::string::npos) << msg;
  }
}

TEST(Softmax, SymmetricInputsAreUniform) {
  auto two = as_double(softmax(D::vector({0, 0}), 0));
  EXPECT_DOUBLE_EQ(two[0], 0.5);
  EXPECT_DOUBLE_EQ(two[1], 0.5);
  for (double p : as_double(softmax(D::vector({1, 1, 1}), 0))) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeGapUnderflowsWithoutNan) {
  auto p = as_double(softmax(D::vector({1000, 0}), 0));
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
  Tensor<float> f = softmax(Tensor<float>::vector({1000.f, 0.f}), 0);
  EXPECT_FALSE(std::isnan(f[0]));
  EXPECT_FALSE(std::isnan(f[1]));
}

TEST(Softmax, RowsSumToOneAndIgnoreShift) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    D x = random_tensor<double>({4, 5}, rng, -20, 20);
    D shifted = add(x, D::full({4, 5}, 123.25));
    auto p = as_double(softmax(x, 1));
    auto q = as_double(softmax(shifted, 1));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += p[r * 5 + c];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    EXPECT_LT(max_abs_diff(p, q), 1e-6);
  }
}

TEST(Softmax, AlongLeadingAxis) {
  D x = D::matrix({{0, 5}, {0, 5}});
  auto p = as_double(softmax(x, 0));
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(LogSoftmax, MatchesLogOfNaiveSoftmax) {
  std::mt19937_64 rng(4);
  D x = random_tensor<double>({3, 6}, rng, -5, 5);
  auto got = as_double(log_softmax(x, 1));
  auto xv = as_double(x);
  for (std::size_t r = 0; r < 3; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 6; ++c) z += std::exp(xv[r * 6 + c]);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(got[r * 6 + c], xv[r * 6 + c] - std::log(z), 1e-12);
  }
  auto extreme = as_double(log_softmax(D::vector({1000, 0}), 0));
  EXPECT_NEAR(extreme[1], -1000.0, 1e-9);
}

TEST(Elementwise, MatchNaiveLoops) {
  std::mt19937_64 rng(5);
  D a = random_tensor<double>({2, 3}, rng, -3, 3);
  D b = random_tensor<double>({2, 3}, rng, -3, 3);
  auto av = as_double(a), bv = as_double(b);
  auto s = as_double(add(a, b)), d = as_double(subtract(a, b)), h = as_double(hadamard(a, b));
  auto sg = as_double(sigmoid(a)), rl = as_double(relu(a)), sc = as_double(scale(a, 2.5));
  for (std::size_t i = 0; i < av.size(); ++i) {
    EXPECT_DOUBLE_EQ(s[i], av[i] + bv[i]);
    EXPECT_DOUBLE_EQ(d[i], av[i] - bv[i]);
    EXPECT_DOUBLE_EQ(h[i], av[i] * bv[i]);
    EXPECT_NEAR(sg[i], 1.0 / (1.0 + std::exp(-av[i])), 1e-15);
    EXPECT_DOUBLE_EQ(rl[i], av[i] > 0 ? av[i] : 0.0);
    EXPECT_DOUBLE_EQ(sc[i], 2.5 * av[i]);
  }
  EXPECT_THROW(add(a, D::zeros({3, 2})), ShapeError);
}

TEST(Structural, TransposeConcatGatherBias) {
  D a = D::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(as_double(transpose(a)), (std::vector<double>{1, 4, 2, 5, 3, 6}));
  D b = D::matrix({{7, 8, 9}});
  EXPECT_EQ(as_double(concat<double>({a, b}, 0)), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9}));
  D c = D::matrix({{10}, {11}});
  EXPECT_EQ(as_double(concat<double>({a, c}, 1)), (std::vector<double>{1, 2, 3, 10, 4, 5, 6, 11}));
  EXPECT_EQ(as_double(gather_rows(a, {1, 1, 0})), (std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3}));
  EXPECT_THROW(gather_rows(a, {2}), ContractError);
  EXPECT_EQ(as_double(add_row_bias(a, D::vector({1, 0, -1}))), (std::vector<double>{2, 2, 2, 5, 5, 5}));
  EXPECT_DOUBLE_EQ(sum(a).item(), 21.0);
  EXPECT_DOUBLE_EQ(mean(a).item(), 3.5);
}

TEST(LayerNorm, NormalizesTwoPointRow) {
  D x = D::matrix({{1, 3}});
  auto y = as_double(layer_norm(x, D::vector({1, 1}), D::vector({0, 0}), 0.0));
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 1.0, 1e-12);
}

TEST(Attention, MatchesNaivePerHead) {
  std::mt19937_64 rng(6);
  const std::size_t lq = 3, lk = 4, heads = 2, m = 6, dk = 3;
  D q = random_tensor<double>({lq, m}, rng), k = random_tensor<double>({lk, m}, rng),
    v = random_tensor<double>({lk, m}, rng);
  auto got = as_double(attention(q, k, v, heads));
  for (std::size_t h = 0; h < heads; ++h) {
    auto slice = [&](const D& t, std::size_t rows) {
      std::vector<double> out;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < dk; ++c) out.push_back(t.at(r, h * dk + c));
      return out;
    };
    auto want = testing::naive_attention(slice(q, lq), slice(k, lk), slice(v, lk), lq, lk, dk);
    for (std::size_t r = 0; r < lq; ++r)
      for (std::size_t c = 0; c < dk; ++c) EXPECT_NEAR(got[r * m + h * dk + c], want[r * dk + c], 1e-12);
  }
}

TEST(Attention, MaskedPositionsGetNoWeight) {
  std::mt19937_64 rng(7);
  D x = random_tensor<double>({4, 4}, rng);
  auto mask = AttentionMask::causal(4);
  AttentionProbe<double> probe;
  attention(x, x, x, 2, &mask, &probe);
  ASSERT_EQ(probe.weights.size(), 2u);
  for (const auto& w : probe.weights)
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) {
        if (j > i) {
          EXPECT_EQ(w[i * 4 + j], 0.0);
        }
        s += w[i * 4 + j];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(CrossEntropy, UniformLogitsGiveLogClasses) {
  D logits = D::zeros({3, 100});
  EXPECT_NEAR(softmax_cross_entropy(logits, {4, 9, 99}).item(), std::log(100.0), 1e-12);
  EXPECT_NEAR(std::log(100.0), 4.6052, 1e-4);
}

TEST(CrossEntropy, IgnoredPositionsDoNotCount) {
  D logits = D::matrix({{2, 0, 0}, {0, 0, 50}});
  const double only_first = softmax_cross_entropy(D::matrix({{2, 0, 0}}), {0}).item();
  EXPECT_THROW(softmax_cross_entropy(logits, {0, 0}, std::size_t{0}), ContractError);
  EXPECT_NEAR(softmax_cross_entropy(logits, {0, 1}, std::size_t{1}).item(), only_first, 1e-15);
}

// ---------------------------------------------------------------------------
// Reverse mode

TEST(Backward, SumGivesOnes) {
  D x = D::zeros({2, 3}, true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    tape.backward(sum(x));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareAtThree) {
  D x = D::vector({3}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  tape.backward(sum(hadamard(x, x)));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, RepeatedUseAccumulates) {
  D x = D::vector({1.5, -2}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  D y = add(add(x, x), x);
  tape.backward(sum(y));
  EXPECT_EQ(x.grad()[0], 3.0);
  EXPECT_EQ(x.grad()[1], 3.0);
  D z = sum(x);  // second backward without zeroing sums onto the first
  tape.backward(z);
  EXPECT_EQ(x.grad()[0], 4.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  D x = D::vector({1, 2}, true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  D y = scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, NothingRecordedWithoutTape) {
  D x = D::vector({1, 2}, true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    NoTapeScope<double> off;
    sum(x);
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(GradCheck, SquareFunction) {
  D x = D::vector({3}, true);
  auto rep = grad_check<double>([&] { return sum(hadamard(x, x)); }, {{"x", x}});
  EXPECT_LT(rep.max_rel_error, 1e-8);
}

TEST(GradCheck, CrossEntropyOnThreeLogits) {
  D logits = D::matrix({{0.3, -1.2, 2.0}}, true);
  auto rep = grad_check<double>([&] { return softmax_cross_entropy(logits, {1}); }, {{"logits", logits}});
  EXPECT_LT(rep.max_rel_error, 1e-7);
}

TEST(GradCheck, DetectsNondeterminism) {
  D x = D::vector({1}, true);
  int calls = 0;
  auto f = [&] { return scale(sum(x), static_cast<double>(++calls)); };
  EXPECT_THROW(grad_check<double>(f, {{"x", x}}), ContractError);
}

// Every primitive against central differences over 100 random inputs. The
// scalar loss is a fixed random projection of the primitive's output.
struct PrimitiveCase {
  const char* name;
  std::vector<Shape> inputs;
  std::function<D(const std::vector<D>&)> op;
  double lo = -2, hi = 2;
};

class PrimitiveGradient : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradient, MatchesFiniteDifferences) {
  const auto& pc = GetParam();
  std::mt19937_64 rng(42);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<D> xs;
    std::vector<NamedTensor<double>> named;
    for (std::size_t i = 0; i < pc.inputs.size(); ++i) {
      xs.push_back(random_tensor<double>(pc.inputs[i], rng, pc.lo, pc.hi, true));
      named.push_back({"in" + std::to_string(i), xs.back()});
    }
    D probe_out;
    {
      NoTapeScope<double> off;
      probe_out = pc.op(xs);
    }
    D w = random_tensor<double>(probe_out.shape(), rng);
    auto rep = grad_check<double>([&] { return sum(hadamard(pc.op(xs), w)); }, named);
    worst = std::max(worst, rep.max_rel_error);
  }
  EXPECT_LT(worst, 1e-6) << pc.name;
}

const AttentionMask kCausal3 = AttentionMask::causal(3);

INSTANTIATE_TEST_SUITE_P(
    AllPrimitives, PrimitiveGradient,
    ::testing::Values(
        PrimitiveCase{"add", {{2, 3}, {2, 3}}, [](auto& x) { return add(x[0], x[1]); }},
        PrimitiveCase{"subtract", {{2, 3}, {2, 3}}, [](auto& x) { return subtract(x[0], x[1]); }},
        PrimitiveCase{"hadamard", {{2, 3}, {2, 3}}, [](auto& x) { return hadamard(x[0], x[1]); }},
        PrimitiveCase{"scale", {{3}}, [](auto& x) { return scale(x[0], -1.75); }},
        PrimitiveCase{"sigmoid", {{2, 3}}, [](auto& x) { return sigmoid(x[0]); }, -6, 6},
        PrimitiveCase{"relu", {{2, 3}}, [](auto& x) { return relu(x[0]); }},
        PrimitiveCase{"reshape", {{2, 3}}, [](auto& x) { return reshape(x[0], {3, 2}); }},
        PrimitiveCase{"transpose", {{2, 3}}, [](auto& x) { return transpose(x[0]); }},
        PrimitiveCase{"concat_rows", {{2, 3}, {1, 3}}, [](auto& x) { return concat<double>({x[0], x[1]}, 0); }},
        PrimitiveCase{"concat_cols", {{2, 3}, {2, 2}}, [](auto& x) { return concat<double>({x[0], x[1]}, 1); }},
        PrimitiveCase{"gather_rows", {{4, 3}}, [](auto& x) { return gather_rows(x[0], {2, 0, 2}); }},
        PrimitiveCase{"matmul", {{2, 3}, {3, 4}}, [](auto& x) { return matmul(x[0], x[1]); }},
        PrimitiveCase{"add_row_bias", {{3, 2}, {2}}, [](auto& x) { return add_row_bias(x[0], x[1]); }},
        PrimitiveCase{"sum", {{2, 3}}, [](auto& x) { return sum(x[0]); }},
        PrimitiveCase{"mean", {{2, 3}}, [](auto& x) { return mean(x[0]); }},
        PrimitiveCase{"softmax_cols", {{2, 4}}, [](auto& x) { return softmax(x[0], 1); }},
        PrimitiveCase{"softmax_rows", {{3, 2}}, [](auto& x) { return softmax(x[0], 0); }},
        PrimitiveCase{"log_softmax", {{2, 4}}, [](auto& x) { return log_softmax(x[0], 1); }},
        PrimitiveCase{"layer_norm", {{2, 4}, {4}, {4}},
                      [](auto& x) { return layer_norm(x[0], x[1], x[2], 1e-6); }},
        PrimitiveCase{"attention", {{2, 4}, {3, 4}, {3, 4}},
                      [](auto& x) { return attention(x[0], x[1], x[2], 2); }},
        PrimitiveCase{"attention_causal", {{3, 4}, {3, 4}, {3, 4}},
                      [](auto& x) { return attention(x[0], x[1], x[2], 2, &kCausal3); }},
        PrimitiveCase{"cross_entropy", {{3, 5}},
                      [](auto& x) { return softmax_cross_entropy(x[0], {1, 0, 4}); }}),
    [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace mitvg
