// Copyright 2026 The Timbre Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "timbre/grad_check.hpp"
#include "timbre/rng.hpp"
#include "timbre/tensor.hpp"

namespace timbre {
namespace {

using Mat = Matrix<double>;

Mat random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

TEST(TensorTest, MatmulIdentityAndHandArithmetic) {
  Tape<double> tape;
  Mat x(2, 2);
  x << 0.5, -2.0, 3.0, 7.25;
  auto id = tape.constant(Mat::Identity(2, 2));
  EXPECT_EQ(matmul(id, tape.constant(x)).value(), x);

  Mat a(2, 2), b(2, 1), want(2, 1);
  a << 1, 2, 3, 4;
  b << 5, 6;
  want << 17, 39;
  EXPECT_EQ(matmul(tape.constant(a), tape.constant(b)).value(), want);
}

TEST(TensorTest, MatmulShapeMismatchThrows) {
  Tape<double> tape;
  auto a = tape.constant(Mat::Ones(2, 3));
  auto b = tape.constant(Mat::Ones(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
  EXPECT_THROW(add(a, tape.constant(Mat::Ones(3, 2))), Error);
  EXPECT_THROW(reshape(a, 4, 2), Error);
  EXPECT_THROW(slice(a, 1, 1, 2, 2), Error);
}

TEST(TensorTest, MatmulGradientMatchesFiniteDifferences) {
  Rng rng(11);
  const Mat a = random_matrix(7, 5, rng);
  const Mat b = random_matrix(5, 3, rng);
  const Mat w = random_matrix(7, 3, rng);
  ScalarFn<double> f = [&w](Tape<double>&, std::span<const Tensor<double>> xs) {
    return weighted_sum(matmul(xs[0], xs[1]), w);
  };
  const auto res = grad_check<double>(f, {a, b}, 1e-5);
  EXPECT_LT(res.max_rel_error, 1e-6);
  EXPECT_EQ(res.checked, 35u + 15u);
}

TEST(TensorTest, TransposeOfProductIsReversedProductExactly) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Mat a(4, 6), b(6, 3);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = double(rng.below(21)) - 10.0;
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = double(rng.below(21)) - 10.0;
    Tape<double> tape;
    auto ta = tape.constant(a), tb = tape.constant(b);
    EXPECT_EQ(transpose(matmul(ta, tb)).value(), matmul(transpose(tb), transpose(ta)).value());
  }
}

TEST(TensorTest, SoftmaxKnownValues) {
  Tape<double> tape;
  auto uniform = softmax_rows(tape.constant(Mat::Zero(1, 4)));
  for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(uniform.value()(0, j), 0.25);

  Mat big(1, 2);
  big << 1000.0, 0.0;
  auto stable = softmax_rows(tape.constant(big));
  EXPECT_TRUE(stable.value().allFinite());
  EXPECT_DOUBLE_EQ(stable.value()(0, 0), 1.0);
  EXPECT_LT(stable.value()(0, 1), 1e-300);
}

TEST(TensorTest, SoftmaxShiftInvarianceAndStochasticRows) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat x = random_matrix(5, 9, rng, -20.0, 20.0);
    const double c = rng.uniform(-100.0, 100.0);
    Tape<double> tape;
    const Mat y = softmax_rows(tape.constant(x)).value();
    const Mat shifted = softmax_rows(tape.constant((x.array() + c).matrix())).value();
    EXPECT_LT((y - shifted).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index r = 0; r < y.rows(); ++r) EXPECT_NEAR(y.row(r).sum(), 1.0, 1e-12);
    EXPECT_GT(y.minCoeff(), 0.0);
    EXPECT_LE(y.maxCoeff(), 1.0);
  }
}

TEST(TensorTest, ReluAndStructuralOps) {
  Tape<double> tape;
  Mat x(1, 3);
  x << -1, 0, 2;
  Mat want(1, 3);
  want << 0, 0, 2;
  EXPECT_EQ(relu(tape.constant(x)).value(), want);

  Rng rng(9);
  const Mat m = random_matrix(6, 4, rng);
  auto t = tape.constant(m);
  EXPECT_EQ(reshape(reshape(t, 3, 8), 6, 4).value(), m);
  // Row-major semantics: the flat index r*cols + c is preserved.
  const Mat flat = reshape(t, 1, 24).value();
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(flat(0, r * 4 + c), m(r, c));
}

TEST(TensorTest, ConcatOfEightHeadsRecoversSlices) {
  Rng rng(4);
  Tape<double> tape;
  std::vector<Tensor<double>> parts;
  std::vector<Mat> values;
  for (int h = 0; h < 8; ++h) {
    values.push_back(random_matrix(22, 16, rng));
    parts.push_back(tape.constant(values.back()));
  }
  auto joined = concat_cols<double>(parts);
  ASSERT_EQ(joined.cols(), 128);
  for (int h = 0; h < 8; ++h) EXPECT_EQ(slice(joined, 0, h * 16, 22, 16).value(), values[h]);
}

TEST(TensorTest, StackAndFlattenFramesAreInverse) {
  Rng rng(1);
  const Mat flat = random_matrix(3, 4 * 5, rng);
  Tape<double> tape;
  auto seq = stack_frames(tape.constant(flat), 5);
  ASSERT_EQ(seq.rows(), 15);
  ASSERT_EQ(seq.cols(), 4);
  // Sample 1, frame 2, feature 3 lives at flat column 3*5 + 2.
  EXPECT_EQ(seq.value()(1 * 5 + 2, 3), flat(1, 3 * 5 + 2));
  EXPECT_EQ(flatten_frames(seq, 5).value(), flat);
}

TEST(GradCheckTest, QuadraticHasExactGradient) {
  Mat x(1, 2);
  x << 1.0, 2.0;
  std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> quad =
      [](Tape<double>&, const Tensor<double>& v) { return sum(matmul(v, transpose(v))); };
  Tape<double> tape;
  auto leaf = tape.leaf(x);
  tape.backward(quad(tape, leaf));
  EXPECT_DOUBLE_EQ(leaf.grad()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(leaf.grad()(0, 1), 4.0);
  EXPECT_LT(grad_check<double>(quad, x, 1e-5), 1e-9);
}

TEST(GradCheckTest, ReluAwayFromKinkHasUnitGradient) {
  Rng rng(3);
  const Mat x = random_matrix(3, 4, rng, 0.5, 2.0);
  Tape<double> tape;
  auto leaf = tape.leaf(x);
  tape.backward(sum(relu(leaf)));
  EXPECT_EQ(leaf.grad(), Mat::Ones(3, 4));
  std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)> f =
      [](Tape<double>&, const Tensor<double>& v) { return sum(relu(v)); };
  EXPECT_LT(grad_check<double>(f, x, 1e-5), 1e-9);
}

TEST(GradCheckTest, ReluSubgradientAtZeroIsZero) {
  Tape<double> tape;
  auto leaf = tape.leaf(Mat::Zero(1, 3));
  tape.backward(sum(relu(leaf)));
  EXPECT_EQ(leaf.grad(), Mat::Zero(1, 3));
}

// Every differentiable op through a random linear functional, 10 seeds.
TEST(GradCheckTest, AllOpsAgreeWithFiniteDifferences) {
  using Op = std::function<Tensor<double>(std::span<const Tensor<double>>)>;
  struct Case {
    const char* name;
    std::vector<std::pair<int, int>> shapes;
    Op op;
  };
  const std::vector<Case> cases = {
      {"matmul", {{4, 3}, {3, 5}}, [](auto xs) { return matmul(xs[0], xs[1]); }},
      {"add", {{3, 4}, {3, 4}}, [](auto xs) { return add(xs[0], xs[1]); }},
      {"add_row", {{5, 4}, {1, 4}}, [](auto xs) { return add_row(xs[0], xs[1]); }},
      {"scale", {{3, 3}}, [](auto xs) { return scale(xs[0], -1.7); }},
      {"transpose", {{2, 5}}, [](auto xs) { return transpose(xs[0]); }},
      {"reshape", {{4, 6}}, [](auto xs) { return reshape(xs[0], 3, 8); }},
      {"softmax", {{4, 7}}, [](auto xs) { return softmax_rows(xs[0]); }},
      {"slice", {{6, 6}}, [](auto xs) { return slice(xs[0], 1, 2, 3, 4); }},
      {"concat_cols",
       {{3, 2}, {3, 4}},
       [](auto xs) { return concat_cols<double>(xs); }},
      {"concat_rows",
       {{2, 3}, {4, 3}},
       [](auto xs) { return concat_rows<double>(xs); }},
      {"stack_frames", {{2, 12}}, [](auto xs) { return stack_frames(xs[0], 3); }},
      {"flatten_frames", {{6, 4}}, [](auto xs) { return flatten_frames(xs[0], 3); }},
      {"softmax_of_matmul", {{3, 4}, {4, 3}}, [](auto xs) { return softmax_rows(matmul(xs[0], xs[1])); }},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed * 31 + 7);
      std::vector<Mat> inputs;
      for (auto [r, k] : c.shapes) inputs.push_back(random_matrix(r, k, rng, -2.0, 2.0));
      Tape<double> probe;
      std::vector<Tensor<double>> leaves;
      for (const auto& m : inputs) leaves.push_back(probe.constant(m));
      const Mat out = c.op(leaves).value();
      const Mat w = random_matrix(out.rows(), out.cols(), rng);
      ScalarFn<double> f = [&](Tape<double>&, std::span<const Tensor<double>> xs) {
        return weighted_sum(c.op(xs), w);
      };
      EXPECT_LT(grad_check<double>(f, inputs, 1e-5).max_rel_error, 1e-4) << c.name << " seed " << seed;
    }
  }
}

TEST(RngTest, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
  }
}

TEST(RngTest, FrozenFirstDraws) {
  // SplitMix64 reference values for seed 0 (counter starting at 1).
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(rng.next_u64(), 0x6E789E6AA1B965F4ULL);
}

TEST(RngTest, BelowStaysInRangeAndShuffleIsPermutation) {
  Rng rng(8);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) ++hist[rng.below(7)];
  for (int h : hist) EXPECT_GT(h, 800);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

}  // namespace
}  // namespace timbre
