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

#include <cmath>
#include <numeric>
#include <vector>

#include "timbre/grad_check.hpp"
#include "timbre/layers.hpp"
#include "timbre/rng.hpp"

namespace timbre {
namespace {

using Mat = Matrix<double>;

Mat random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

struct AttentionWeights {
  std::vector<Mat> mats;  // w_q b_q w_k b_k w_v b_v w_o b_o

  static AttentionWeights random(int d, Rng& rng) {
    AttentionWeights w;
    const double s = 1.0 / std::sqrt(double(d));
    for (int i = 0; i < 4; ++i) {
      w.mats.push_back(random_matrix(d, d, rng, s));
      w.mats.push_back(random_matrix(1, d, rng, 0.1));
    }
    return w;
  }
};

AttentionParams<double> bind_attention(std::span<const Tensor<double>> t, int heads) {
  return {{t[0], t[1]}, {t[2], t[3]}, {t[4], t[5]}, {t[6], t[7]}, heads};
}

TEST(LinearTest, IdentityAndHandExample) {
  Tape<double> tape;
  Rng rng(1);
  const Mat x = random_matrix(3, 4, rng);
  LinearParams<double> id{tape.constant(Mat::Identity(4, 4)), tape.constant(Mat::Zero(1, 4))};
  EXPECT_EQ(linear(id, tape.constant(x)).value(), x);

  Mat w(1, 2), b(1, 1), in(1, 2);
  w << 1, 1;
  b << 1;
  in << 2, 3;
  LinearParams<double> p{tape.constant(w), tape.constant(b)};
  EXPECT_DOUBLE_EQ(linear(p, tape.constant(in)).value()(0, 0), 6.0);
  EXPECT_THROW(linear(p, tape.constant(Mat::Ones(1, 3))), Error);
}

TEST(LinearTest, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Mat x = random_matrix(4, 5, rng), w = random_matrix(3, 5, rng), b = random_matrix(1, 3, rng);
    const Mat r = random_matrix(4, 3, rng);
    ScalarFn<double> f = [&r](Tape<double>&, std::span<const Tensor<double>> xs) {
      return weighted_sum(linear(LinearParams<double>{xs[1], xs[2]}, xs[0]), r);
    };
    EXPECT_LT(grad_check<double>(f, {x, w, b}, 1e-5).max_rel_error, 1e-6);
  }
}

TEST(AttentionTest, IdenticalKeysGiveUniformWeights) {
  Rng rng(2);
  const Mat q = random_matrix(5, 3, rng);
  Mat k(5, 3);
  k.rowwise() = random_matrix(1, 3, rng).row(0);
  const Mat v = random_matrix(5, 2, rng);
  Tape<double> tape;
  auto res = scaled_dot_product_attention(tape.constant(q), tape.constant(k), tape.constant(v));
  EXPECT_LT((res.weights.value().array() - 0.2).abs().maxCoeff(), 1e-12);
  const Eigen::RowVectorXd mean = v.colwise().mean();
  for (Eigen::Index r = 0; r < 5; ++r) EXPECT_LT((res.output.value().row(r) - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AttentionTest, LargeOrthogonalQueriesApproachIdentity) {
  const double c = 100.0;
  const Mat q = c * Mat::Identity(4, 4);
  Tape<double> tape;
  auto res = scaled_dot_product_attention(tape.constant(q), tape.constant(q), tape.constant(Mat::Identity(4, 4)));
  // Scalar oracle: diagonal score c^2/sqrt(4), off-diagonal 0.
  const double s = c * c / 2.0;
  const double diag = 1.0 / (1.0 + 3.0 * std::exp(-s));
  for (int i = 0; i < 4; ++i) {
    EXPECT_GT(res.weights.value()(i, i), 0.999);
    EXPECT_NEAR(res.weights.value()(i, i), diag, 1e-12);
  }
}

TEST(AttentionTest, TwoTokenHandExample) {
  Mat q(2, 1), v(2, 1);
  q << 1, 0;
  v << 10, 20;
  Tape<double> tape;
  auto res = scaled_dot_product_attention(tape.constant(q), tape.constant(q), tape.constant(v));
  EXPECT_NEAR(res.weights.value()(0, 0), 0.7311, 1e-4);
  EXPECT_NEAR(res.weights.value()(0, 1), 0.2689, 1e-4);
  EXPECT_NEAR(res.output.value()(0, 0), 12.689, 1e-3);
}

TEST(MultiHeadAttentionTest, SingleHeadEqualsPlainAttention) {
  Rng rng(3);
  const auto w = AttentionWeights::random(128, rng);
  const Mat x = random_matrix(22, 128, rng);
  Tape<double> tape;
  std::vector<Tensor<double>> t;
  for (const auto& m : w.mats) t.push_back(tape.constant(m));
  auto params = bind_attention(t, 1);
  const Mat mha = multi_head_attention(params, tape.constant(x), 22).value();

  auto xt = tape.constant(x);
  auto plain = scaled_dot_product_attention(linear(params.query, xt), linear(params.key, xt), linear(params.value, xt));
  const Mat want = linear(params.output, plain.output).value();
  EXPECT_LT((mha - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MultiHeadAttentionTest, EightHeadsUseSixteenDimensionsAndScaledScores) {
  Rng rng(4);
  const auto w = AttentionWeights::random(128, rng);
  const Mat x = random_matrix(22, 128, rng);
  Tape<double> tape;
  std::vector<Tensor<double>> t;
  for (const auto& m : w.mats) t.push_back(tape.constant(m));
  std::vector<AttentionTrace<double>> traces;
  const Mat out = multi_head_attention(bind_attention(t, 8), tape.constant(x), 22, &traces).value();
  EXPECT_EQ(out.rows(), 22);
  EXPECT_EQ(out.cols(), 128);
  ASSERT_EQ(traces.size(), 1u);
  ASSERT_EQ(traces[0].per_head.size(), 8u);

  // Head 3 by hand: columns [48, 64) of the projections, divisor sqrt(16) = 4.
  const Mat q = (x * w.mats[0].transpose()).rowwise() + w.mats[1].row(0);
  const Mat k = (x * w.mats[2].transpose()).rowwise() + w.mats[3].row(0);
  const Mat scores = q.middleCols(48, 16) * k.middleCols(48, 16).transpose() / 4.0;
  EXPECT_LT((traces[0].raw_scores[3] - scores).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MultiHeadAttentionTest, RejectsHeadCountsThatDoNotDivideModelWidth) {
  Rng rng(5);
  const auto w = AttentionWeights::random(128, rng);
  Tape<double> tape;
  std::vector<Tensor<double>> t;
  for (const auto& m : w.mats) t.push_back(tape.constant(m));
  try {
    multi_head_attention(bind_attention(t, 3), tape.constant(random_matrix(22, 128, rng)), 22);
    FAIL() << "expected InvalidHeadCount";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidHeadCount);
  }
}

TEST(MultiHeadAttentionTest, PermutingFramesPermutesOutputRows) {
  for (int heads : {1, 8, 16}) {
    Rng rng(100 + heads);
    const auto w = AttentionWeights::random(128, rng);
    const Mat x = random_matrix(22, 128, rng);
    std::vector<int> perm(22);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Mat xp(22, 128);
    for (int i = 0; i < 22; ++i) xp.row(i) = x.row(perm[i]);

    Tape<double> tape;
    std::vector<Tensor<double>> t;
    for (const auto& m : w.mats) t.push_back(tape.constant(m));
    const Mat y = multi_head_attention(bind_attention(t, heads), tape.constant(x), 22).value();
    const Mat yp = multi_head_attention(bind_attention(t, heads), tape.constant(xp), 22).value();
    for (int i = 0; i < 22; ++i) EXPECT_LT((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(MultiHeadAttentionTest, GradientThroughBlock) {
  for (int heads : {1, 8}) {
    Rng rng(7 + heads);
    const auto w = AttentionWeights::random(128, rng);
    const Mat x = random_matrix(22, 128, rng);
    const Mat r = random_matrix(22, 128, rng);
    // The key bias shifts every score in a row equally, so its true gradient
    // is zero and only an absolute bound is meaningful.
    std::vector<Mat> inputs = w.mats;
    inputs.erase(inputs.begin() + 3);
    inputs.push_back(x);
    ScalarFn<double> f = [&](Tape<double>& tape, std::span<const Tensor<double>> xs) {
      std::vector<Tensor<double>> t(xs.begin(), xs.begin() + 7);
      t.insert(t.begin() + 3, tape.constant(w.mats[3]));
      return weighted_sum(multi_head_attention(bind_attention(t, heads), xs[7], 22), r);
    };
    const auto res = grad_check<double>(f, inputs, 1e-5, std::size_t{25}, heads);
    EXPECT_LT(res.max_rel_error, 1e-4) << "heads " << heads << " worst input " << res.input;

    Tape<double> tape;
    std::vector<Tensor<double>> t;
    for (const auto& m : w.mats) t.push_back(tape.leaf(m, true));
    tape.backward(weighted_sum(multi_head_attention(bind_attention(t, heads), tape.constant(x), 22), r));
    EXPECT_LT(t[3].grad().cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(CrossEntropyTest, UniformAndConfidentLogits) {
  Tape<double> tape;
  const std::vector<int> label{7};
  EXPECT_NEAR(cross_entropy(tape.constant(Mat::Constant(1, 20, 0.3)), label).value()(0, 0), std::log(20.0), 1e-12);

  Mat confident = Mat::Zero(1, 20);
  confident(0, 7) = 1000.0;
  EXPECT_LT(cross_entropy(tape.constant(confident), label).value()(0, 0), 1e-6);
}

TEST(CrossEntropyTest, BatchMeanMatchesScalarLogSumExp) {
  Mat z = Mat::Zero(2, 20);
  z(0, 2) = 6.0;  // correct and confident
  z(1, 5) = 6.0;  // wrong: label is 9
  z(1, 9) = 1.0;
  const std::vector<int> labels{2, 9};
  // Scalar oracle.
  const double lse0 = std::log(std::exp(6.0) + 19.0);
  const double lse1 = std::log(std::exp(6.0) + std::exp(1.0) + 18.0);
  const double want = ((lse0 - 6.0) + (lse1 - 1.0)) / 2.0;
  Tape<double> tape;
  EXPECT_NEAR(cross_entropy(tape.constant(z), labels).value()(0, 0), want, 1e-6);
}

TEST(CrossEntropyTest, ShiftInvariantNonNegativeAndDifferentiable) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Mat z = random_matrix(4, 20, rng);
    std::vector<int> labels;
    for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.below(20)));
    Mat shifted = z;
    shifted.row(2).array() += 17.0;
    Tape<double> tape;
    const double a = cross_entropy(tape.constant(z), labels).value()(0, 0);
    EXPECT_GE(a, 0.0);
    Mat single_a = z.row(2), single_b = shifted.row(2);
    const std::vector<int> one{labels[2]};
    EXPECT_NEAR(cross_entropy(tape.constant(single_a), one).value()(0, 0),
                cross_entropy(tape.constant(single_b), one).value()(0, 0), 1e-12);
    ScalarFn<double> f = [&labels](Tape<double>&, std::span<const Tensor<double>> xs) {
      return cross_entropy(xs[0], labels);
    };
    EXPECT_LT(grad_check<double>(f, {z}, 1e-5).max_rel_error, 1e-5);
  }
}

TEST(CrossEntropyTest, RejectsOutOfRangeLabels) {
  Tape<double> tape;
  const std::vector<int> bad{20};
  try {
    cross_entropy(tape.constant(Mat::Zero(1, 20)), bad);
    FAIL() << "expected LabelOutOfRange";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LabelOutOfRange);
  }
}

}  // namespace
}  // namespace timbre
