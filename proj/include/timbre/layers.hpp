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

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "timbre/tensor.hpp"

namespace timbre {

/// y = x * W^T + b, with W [out x in] and b [1 x out].
template <typename Scalar>
struct LinearParams {
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
};

template <typename Scalar>
Tensor<Scalar> linear(const LinearParams<Scalar>& p, const Tensor<Scalar>& x) {
  if (x.cols() != p.weight.cols()) {
    throw Error(Errc::ShapeMismatch, "linear: input width " + std::to_string(x.cols()) +
                                         " but weight expects " + std::to_string(p.weight.cols()));
  }
  return add_row(matmul(x, transpose(p.weight)), p.bias);
}

template <typename Scalar>
struct AttentionResult {
  Tensor<Scalar> output;   // [T x d_v]
  Tensor<Scalar> weights;  // [T x T], rows sum to 1
  Tensor<Scalar> scores;   // [T x T], pre-softmax, already divided by sqrt(d_k)
};

/// softmax(q k^T / sqrt(d_k)) v for one sequence.
template <typename Scalar>
AttentionResult<Scalar> scaled_dot_product_attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                                     const Tensor<Scalar>& v) {
  if (q.cols() != k.cols() || q.rows() != k.rows() || k.rows() != v.rows()) {
    throw Error(Errc::ShapeMismatch, "attention: q/k/v shapes disagree");
  }
  const Scalar inv_sqrt_dk = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  Tensor<Scalar> scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  Tensor<Scalar> weights = softmax_rows(scores);
  return {matmul(weights, v), weights, scores};
}

template <typename Scalar>
struct AttentionParams {
  LinearParams<Scalar> query;
  LinearParams<Scalar> key;
  LinearParams<Scalar> value;
  LinearParams<Scalar> output;
  int heads = 1;
};

/// Post-softmax attention weights of one sequence, per head and averaged.
template <typename Scalar>
struct AttentionTrace {
  std::vector<Matrix<Scalar>> per_head;
  std::vector<Matrix<Scalar>> raw_scores;
  Matrix<Scalar> averaged;

  template <typename Other>
  AttentionTrace<Other> cast() const {
    AttentionTrace<Other> out;
    for (const auto& m : per_head) out.per_head.push_back(m.template cast<Other>());
    for (const auto& m : raw_scores) out.raw_scores.push_back(m.template cast<Other>());
    out.averaged = averaged.template cast<Other>();
    return out;
  }
};

/// Multi-head self-attention over `x` = [n*T x d_model], i.e. n independent
/// sequences of length T stacked along rows. Head i uses columns
/// [i*d_k, (i+1)*d_k) of the query/key/value projections. One trace per
/// sequence is appended to `traces` when it is non-null.
template <typename Scalar>
Tensor<Scalar> multi_head_attention(const AttentionParams<Scalar>& p, const Tensor<Scalar>& x,
                                    Eigen::Index seq_len,
                                    std::vector<AttentionTrace<Scalar>>* traces = nullptr) {
  const Eigen::Index d_model = x.cols();
  if (p.heads <= 0 || d_model % p.heads != 0) {
    throw Error(Errc::InvalidHeadCount, std::to_string(p.heads) + " heads for d_model " +
                                            std::to_string(d_model));
  }
  if (seq_len <= 0 || x.rows() % seq_len != 0) {
    throw Error(Errc::ShapeMismatch, "attention input rows not a multiple of the sequence length");
  }
  const Eigen::Index d_k = d_model / p.heads;
  const Eigen::Index n_seq = x.rows() / seq_len;

  Tensor<Scalar> q = linear(p.query, x);
  Tensor<Scalar> k = linear(p.key, x);
  Tensor<Scalar> v = linear(p.value, x);

  std::vector<Tensor<Scalar>> sequences;
  sequences.reserve(static_cast<std::size_t>(n_seq));
  for (Eigen::Index s = 0; s < n_seq; ++s) {
    const Eigen::Index r0 = s * seq_len;
    std::vector<Tensor<Scalar>> heads;
    heads.reserve(static_cast<std::size_t>(p.heads));
    AttentionTrace<Scalar> trace;
    for (int h = 0; h < p.heads; ++h) {
      const Eigen::Index c0 = h * d_k;
      auto head = scaled_dot_product_attention(slice(q, r0, c0, seq_len, d_k),
                                               slice(k, r0, c0, seq_len, d_k),
                                               slice(v, r0, c0, seq_len, d_k));
      heads.push_back(head.output);
      if (traces) {
        trace.per_head.push_back(head.weights.value());
        trace.raw_scores.push_back(head.scores.value());
      }
    }
    sequences.push_back(concat_cols<Scalar>(heads));
    if (traces) {
      trace.averaged = Matrix<Scalar>::Zero(seq_len, seq_len);
      for (const auto& w : trace.per_head) trace.averaged += w;
      trace.averaged /= static_cast<Scalar>(p.heads);
      traces->push_back(std::move(trace));
    }
  }
  Tensor<Scalar> merged = sequences.size() == 1 ? sequences.front() : concat_rows<Scalar>(sequences);
  return linear(p.output, merged);
}

/// Mean categorical cross-entropy of logits [b x C] against class indices.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels) {
  const Eigen::Index batch = logits.rows();
  const Eigen::Index classes = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw Error(Errc::ShapeMismatch, "cross_entropy: " + std::to_string(labels.size()) +
                                         " labels for batch of " + std::to_string(batch));
  }
  for (int label : labels) {
    if (label < 0 || label >= classes) {
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(label));
    }
  }
  const Matrix<Scalar>& z = logits.value();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> max = z.rowwise().maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lse =
      max.array() + (z.colwise() - max).array().exp().rowwise().sum().log();
  Scalar total = 0;
  for (Eigen::Index i = 0; i < batch; ++i) total += lse(i) - z(i, labels[static_cast<std::size_t>(i)]);
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total / static_cast<Scalar>(batch);

  const std::size_t il = logits.id();
  std::vector<int> targets(labels.begin(), labels.end());
  return logits.tape().record(
      std::move(out), logits.requires_grad(),
      [il, targets = std::move(targets)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
        const Matrix<Scalar>& z = t.value(il);
        Matrix<Scalar> d = detail::softmax_rows(z);
        for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, targets[static_cast<std::size_t>(i)]) -= Scalar(1);
        t.accumulate(il, d * (g(0, 0) / static_cast<Scalar>(d.rows())));
      });
}

}  // namespace timbre
