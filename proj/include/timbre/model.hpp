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

#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <string_view>
#include <utility>
#include <vector>

#include "timbre/layers.hpp"
#include "timbre/rng.hpp"
#include "timbre/tensor.hpp"

namespace timbre {

enum class ModelKind { FreqAttention, FreqFC };

struct ModelSpec {
  ModelKind kind = ModelKind::FreqAttention;
  int heads = 8;  // FreqAttention only
  int n_classes = 20;
  int n_mels = 128;
  int n_frames = 22;

  static ModelSpec attention(int heads) { return {ModelKind::FreqAttention, heads}; }
  static ModelSpec fc() { return {ModelKind::FreqFC, 0}; }

  /// "attention-h8" or "fc"; used for file names and report rows.
  std::string tag() const;
  /// Human-readable row label, e.g. "Freq. Attention (h=8)".
  std::string label() const;
  Eigen::Index input_width() const { return static_cast<Eigen::Index>(n_mels) * n_frames; }
  /// Throws InvalidHeadCount / ShapeMismatch for inconsistent specs.
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Named parameter tensors in a fixed order. Biases are stored as [1 x out] rows.
template <typename Scalar>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix<Scalar> value;
  };

  void add(std::string name, Matrix<Scalar> value) {
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Matrix<Scalar>& at(std::string_view name) const { return entries_[index_of(name)].value; }
  Matrix<Scalar>& at(std::string_view name) { return entries_[index_of(name)].value; }

  bool contains(std::string_view name) const {
    for (const auto& e : entries_)
      if (e.name == name) return true;
    return false;
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    throw Error(Errc::BadFormat, "no parameter named " + std::string(name));
  }

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Total scalar parameter count, optionally restricted to names starting with `prefix`.
  Eigen::Index count(std::string_view prefix = {}) const {
    Eigen::Index n = 0;
    for (const auto& e : entries_)
      if (e.name.starts_with(prefix)) n += e.value.size();
    return n;
  }

  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
    return out;
  }

  bool operator==(const ParamSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols() ||
          a.value != b.value)
        return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

namespace detail {

// U(-limit, limit) with the limit chosen by the caller.
template <typename Scalar>
Matrix<Scalar> uniform_matrix(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng) {
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
  return m;
}

template <typename Scalar>
Matrix<Scalar> glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng) {
  return uniform_matrix<Scalar>(fan_out, fan_in,
                                std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

template <typename Scalar>
Matrix<Scalar> fan_in_uniform(Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng) {
  return uniform_matrix<Scalar>(fan_out, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace detail

/// Allocates and initializes every parameter of `spec`.
///
/// Attention query/key/value projections are Glorot-uniform. Output-side
/// projections (attention output, classifier layers) draw from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)). All biases start at zero.
template <typename Scalar>
ParamSet<Scalar> build(const ModelSpec& spec, Rng& rng) {
  spec.validate();
  const Eigen::Index d = spec.n_mels;
  const Eigen::Index flat = spec.input_width();
  ParamSet<Scalar> p;
  auto zeros = [](Eigen::Index n) { return Matrix<Scalar>::Zero(1, n); };
  if (spec.kind == ModelKind::FreqAttention) {
    p.add("att1.w_q", detail::glorot_uniform<Scalar>(d, d, rng));
    p.add("att1.b_q", zeros(d));
    p.add("att1.w_k", detail::glorot_uniform<Scalar>(d, d, rng));
    p.add("att1.b_k", zeros(d));
    p.add("att1.w_v", detail::glorot_uniform<Scalar>(d, d, rng));
    p.add("att1.b_v", zeros(d));
    p.add("att1.w_o", detail::fan_in_uniform<Scalar>(d, d, rng));
    p.add("att1.b_o", zeros(d));
    p.add("fc.weight", detail::fan_in_uniform<Scalar>(spec.n_classes, flat, rng));
    p.add("fc.bias", zeros(spec.n_classes));
  } else {
    p.add("fc1.weight", detail::fan_in_uniform<Scalar>(d, d, rng));
    p.add("fc1.bias", zeros(d));
    p.add("fc2.weight", detail::fan_in_uniform<Scalar>(spec.n_classes, flat, rng));
    p.add("fc2.bias", zeros(spec.n_classes));
  }
  return p;
}

/// Parameters placed on a tape as leaves, in ParamSet order.
template <typename Scalar>
struct BoundParams {
  std::vector<std::string> names;
  std::vector<Tensor<Scalar>> leaves;

  const Tensor<Scalar>& operator[](std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return leaves[i];
    throw Error(Errc::BadFormat, "no bound parameter named " + std::string(name));
  }
};

template <typename Scalar>
BoundParams<Scalar> bind(Tape<Scalar>& tape, const ParamSet<Scalar>& params, bool requires_grad) {
  BoundParams<Scalar> bound;
  for (const auto& e : params) {
    bound.names.push_back(e.name);
    bound.leaves.push_back(tape.leaf(e.value, requires_grad));
  }
  return bound;
}

template <typename Scalar>
void check_input(const ModelSpec& spec, const Tensor<Scalar>& input) {
  if (input.cols() != spec.input_width() || input.rows() < 1) {
    throw Error(Errc::ShapeMismatch, "model input must be [b x " + std::to_string(spec.input_width()) +
                                         "], got " + detail::shape_str(input.rows(), input.cols()));
  }
}

/// Freq. Attention: each patch becomes a sequence of n_frames tokens with
/// n_mels features, passes through multi-head self-attention, is flattened
/// frequency-major and classified by one linear layer.
template <typename Scalar>
Tensor<Scalar> forward_freq_attention(const ModelSpec& spec, const BoundParams<Scalar>& p,
                                      const Tensor<Scalar>& input,
                                      std::vector<AttentionTrace<Scalar>>* traces = nullptr) {
  if (spec.kind != ModelKind::FreqAttention) throw Error(Errc::WrongModelKind, "expected FreqAttention");
  check_input(spec, input);
  AttentionParams<Scalar> att{{p["att1.w_q"], p["att1.b_q"]},
                              {p["att1.w_k"], p["att1.b_k"]},
                              {p["att1.w_v"], p["att1.b_v"]},
                              {p["att1.w_o"], p["att1.b_o"]},
                              spec.heads};
  Tensor<Scalar> seq = stack_frames(input, spec.n_frames);
  Tensor<Scalar> attended = multi_head_attention(att, seq, spec.n_frames, traces);
  return linear(LinearParams<Scalar>{p["fc.weight"], p["fc.bias"]}, flatten_frames(attended, spec.n_frames));
}

/// Freq. FC: a shared 128->128 layer on every frame, ReLU, flatten, classifier.
template <typename Scalar>
Tensor<Scalar> forward_freq_fc(const ModelSpec& spec, const BoundParams<Scalar>& p,
                               const Tensor<Scalar>& input) {
  if (spec.kind != ModelKind::FreqFC) throw Error(Errc::WrongModelKind, "expected FreqFC");
  check_input(spec, input);
  Tensor<Scalar> frames = stack_frames(input, spec.n_frames);
  Tensor<Scalar> hidden = relu(linear(LinearParams<Scalar>{p["fc1.weight"], p["fc1.bias"]}, frames));
  return linear(LinearParams<Scalar>{p["fc2.weight"], p["fc2.bias"]}, flatten_frames(hidden, spec.n_frames));
}

template <typename Scalar>
Tensor<Scalar> forward(const ModelSpec& spec, const BoundParams<Scalar>& p, const Tensor<Scalar>& input,
                       std::vector<AttentionTrace<Scalar>>* traces = nullptr) {
  return spec.kind == ModelKind::FreqAttention ? forward_freq_attention(spec, p, input, traces)
                                               : forward_freq_fc(spec, p, input);
}

/// Row-major flatten of one [n_mels x n_frames] patch into a [1 x n_mels*n_frames] row.
template <typename Derived>
RowVector<typename Derived::Scalar> flatten_patch(const Eigen::MatrixBase<Derived>& patch) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index rows = patch.rows(), cols = patch.cols();
  RowVector<Scalar> out(rows * cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r * cols + c) = patch(r, c);
  return out;
}

/// Logits [b x n_classes] without recording gradients.
template <typename Scalar>
Matrix<Scalar> predict(const ModelSpec& spec, const ParamSet<Scalar>& params,
                       const std::type_identity_t<Matrix<Scalar>>& batch) {
  Tape<Scalar> tape;
  auto bound = bind(tape, params, false);
  return forward(spec, bound, tape.constant(batch)).value();
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  ParamSet<Scalar> grads;
  Matrix<Scalar> logits;
};

template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(const ModelSpec& spec, const ParamSet<Scalar>& params,
                                  const std::type_identity_t<Matrix<Scalar>>& batch,
                                  std::span<const int> labels) {
  Tape<Scalar> tape;
  auto bound = bind(tape, params, true);
  Tensor<Scalar> logits = forward(spec, bound, tape.constant(batch));
  Tensor<Scalar> loss = cross_entropy(logits, labels);
  tape.backward(loss);
  LossAndGrad<Scalar> out;
  out.loss = loss.value()(0, 0);
  out.logits = logits.value();
  for (std::size_t i = 0; i < bound.leaves.size(); ++i) {
    const auto& leaf = bound.leaves[i];
    out.grads.add(bound.names[i], leaf.grad().size() ? leaf.grad()
                                                     : Matrix<Scalar>::Zero(leaf.rows(), leaf.cols()));
  }
  return out;
}

/// Attention weights of att1 for one [n_mels x n_frames] patch.
template <typename Scalar, typename Derived>
AttentionTrace<Scalar> attention_trace(const ModelSpec& spec, const ParamSet<Scalar>& params,
                                       const Eigen::MatrixBase<Derived>& patch) {
  if (spec.kind != ModelKind::FreqAttention) {
    throw Error(Errc::WrongModelKind, "attention traces need a FreqAttention model");
  }
  if (patch.rows() != spec.n_mels || patch.cols() != spec.n_frames) {
    throw Error(Errc::ShapeMismatch, "patch must be " + detail::shape_str(spec.n_mels, spec.n_frames));
  }
  Tape<Scalar> tape;
  auto bound = bind(tape, params, false);
  Matrix<Scalar> row = flatten_patch(patch.template cast<Scalar>());
  std::vector<AttentionTrace<Scalar>> traces;
  forward_freq_attention(spec, bound, tape.constant(row), &traces);
  return std::move(traces.front());
}

}  // namespace timbre
