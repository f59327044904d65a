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

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape owns every value produced while building an expression; a Tensor is
// a lightweight handle (tape, index) into it. Operations record a backward
// closure that pulls the output gradient and accumulates into its inputs.
// Nodes are appended in evaluation order, so walking the tape backwards is a
// valid topological order.
//
// All tensors are two-dimensional. Batched quantities are stacked along rows:
// a batch of b sequences of T frames with F features is a [b*T x F] matrix, and
// a batch of b patches [F x T] is a [b x F*T] matrix in frequency-major order.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "timbre/error.hpp"

namespace timbre {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
class Tape;

template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Eigen::Index size() const { return value().size(); }

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix<Scalar>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Scalar> leaf(Matrix<Scalar> value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
    return Tensor<Scalar>(this, nodes_.size() - 1);
  }

  Tensor<Scalar> constant(Matrix<Scalar> value) { return leaf(std::move(value), false); }

  /// Appends an op result. The closure is kept only if some input needs a gradient.
  Tensor<Scalar> record(Matrix<Scalar> value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad,
                          requires_grad ? std::move(backward) : Backward{}});
    return Tensor<Scalar>(this, nodes_.size() - 1);
  }

  const Matrix<Scalar>& value(std::size_t id) const { return nodes_.at(id).value; }
  const Matrix<Scalar>& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every node recorded before it.
  void backward(const Tensor<Scalar>& root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw Error(Errc::ShapeMismatch, "backward root must be a 1x1 scalar");
    }
    accumulate(root.id(), Matrix<Scalar>::Ones(1, 1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || node.grad.size() == 0) continue;
      node.backward(*this, node.grad);
    }
  }

  void zero_grad() {
    for (Node& node : nodes_) node.grad.resize(0, 0);
  }

 private:
  struct Node {
    Matrix<Scalar> value;
    Matrix<Scalar> grad;
    bool requires_grad;
    Backward backward;
  };

  // deque: references to existing nodes survive push_back.
  std::deque<Node> nodes_;
};

namespace detail {

template <typename Scalar>
void require_same_tape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (&a.tape() != &b.tape()) {
    throw Error(Errc::ShapeMismatch, "tensors belong to different tapes");
  }
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw Error(Errc::ShapeMismatch, "matmul " + detail::shape_str(a.rows(), a.cols()) + " * " +
                                         detail::shape_str(b.rows(), b.cols()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() * b.value();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                           if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                         });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, "add " + detail::shape_str(a.rows(), a.cols()) + " + " +
                                         detail::shape_str(b.rows(), b.cols()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  Matrix<Scalar> out = a.value() + b.value();
  return a.tape().record(std::move(out), a.requires_grad() || b.requires_grad(),
                         [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                         });
}

/// x + 1*bias, with bias a [1 x cols] row broadcast over every row of x.
template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  detail::require_same_tape(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw Error(Errc::ShapeMismatch, "add_row bias " + detail::shape_str(bias.rows(), bias.cols()) +
                                         " for input " + detail::shape_str(x.rows(), x.cols()));
  }
  const std::size_t ix = x.id(), ib = bias.id();
  Matrix<Scalar> out = x.value().rowwise() + bias.value().row(0);
  return x.tape().record(std::move(out), x.requires_grad() || bias.requires_grad(),
                         [ix, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           t.accumulate(ix, g);
                           if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                         });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  const std::size_t ix = x.id();
  Matrix<Scalar> out = x.value() * factor;
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix, factor](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           t.accumulate(ix, g * factor);
                         });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x) {
  const std::size_t ix = x.id();
  Matrix<Scalar> out = x.value().transpose();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           t.accumulate(ix, g.transpose());
                         });
}

namespace detail {

// Row-major reinterpretation of a column-major Eigen matrix.
template <typename Scalar>
Matrix<Scalar> reshape_row_major(const Matrix<Scalar>& in, Eigen::Index rows, Eigen::Index cols) {
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor src = in;
  return Eigen::Map<const RowMajor>(src.data(), rows, cols);
}

}  // namespace detail

/// Row-major reshape, i.e. the flat index r*cols + c is preserved.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.size()) {
    throw Error(Errc::ShapeMismatch, "reshape " + detail::shape_str(x.rows(), x.cols()) + " to " +
                                         detail::shape_str(rows, cols));
  }
  const std::size_t ix = x.id();
  const Eigen::Index in_rows = x.rows(), in_cols = x.cols();
  return x.tape().record(detail::reshape_row_major(x.value(), rows, cols), x.requires_grad(),
                         [ix, in_rows, in_cols](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           t.accumulate(ix, detail::reshape_row_major(g, in_rows, in_cols));
                         });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  const std::size_t ix = x.id();
  Matrix<Scalar> out = x.value().cwiseMax(Scalar(0));
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           // Subgradient at exactly zero is taken as 0.
                           t.accumulate(ix, (t.value(ix).array() > Scalar(0))
                                                .select(g, Matrix<Scalar>::Zero(g.rows(), g.cols())));
                         });
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& x) {
  Matrix<Scalar> y = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return y;
}

}  // namespace detail

/// Row-wise softmax computed after subtracting each row's maximum.
template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& x) {
  if (x.cols() < 1) throw Error(Errc::ShapeMismatch, "softmax over an empty row");
  const std::size_t ix = x.id();
  const std::size_t iy = x.tape().size();  // id the output will receive
  return x.tape().record(detail::softmax_rows(x.value()), x.requires_grad(),
                         [ix, iy](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           const Matrix<Scalar>& y = t.value(iy);
                           Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots =
                               (g.array() * y.array()).rowwise().sum();
                           t.accumulate(ix, (y.array() * (g.colwise() - dots).array()).matrix());
                         });
}

/// Sub-block copy [r0, r0+rows) x [c0, c0+cols).
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Eigen::Index r0, Eigen::Index c0, Eigen::Index rows,
                     Eigen::Index cols) {
  if (r0 < 0 || c0 < 0 || rows < 0 || cols < 0 || r0 + rows > x.rows() || c0 + cols > x.cols()) {
    throw Error(Errc::ShapeMismatch, "slice out of bounds of " + detail::shape_str(x.rows(), x.cols()));
  }
  const std::size_t ix = x.id();
  const Eigen::Index in_rows = x.rows(), in_cols = x.cols();
  Matrix<Scalar> out = x.value().block(r0, c0, rows, cols);
  return x.tape().record(std::move(out), x.requires_grad(),
                         [=](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           Matrix<Scalar> full = Matrix<Scalar>::Zero(in_rows, in_cols);
                           full.block(r0, c0, rows, cols) = g;
                           t.accumulate(ix, full);
                         });
}

/// Concatenation along the last (column) axis.
template <typename Scalar>
Tensor<Scalar> concat_cols(std::span<const Tensor<Scalar>> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of zero tensors");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool needs_grad = false;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    detail::require_same_tape(parts.front(), p);
    if (p.rows() != rows) throw Error(Errc::ShapeMismatch, "concat_cols row mismatch");
    cols += p.cols();
    needs_grad = needs_grad || p.requires_grad();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return parts.front().tape().record(
      std::move(out), needs_grad,
      [ids = std::move(ids), widths = std::move(widths)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
        Eigen::Index at = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          t.accumulate(ids[i], g.middleCols(at, widths[i]));
          at += widths[i];
        }
      });
}

template <typename Scalar>
Tensor<Scalar> concat_rows(std::span<const Tensor<Scalar>> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of zero tensors");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool needs_grad = false;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> heights;
  for (const auto& p : parts) {
    detail::require_same_tape(parts.front(), p);
    if (p.cols() != cols) throw Error(Errc::ShapeMismatch, "concat_rows column mismatch");
    rows += p.rows();
    needs_grad = needs_grad || p.requires_grad();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return parts.front().tape().record(
      std::move(out), needs_grad,
      [ids = std::move(ids), heights = std::move(heights)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
        Eigen::Index at = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          t.accumulate(ids[i], g.middleRows(at, heights[i]));
          at += heights[i];
        }
      });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  const std::size_t ix = x.id();
  const Eigen::Index rows = x.rows(), cols = x.cols();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix, rows, cols](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           t.accumulate(ix, Matrix<Scalar>::Constant(rows, cols, g(0, 0)));
                         });
}

/// sum(x .* weights) for a constant weight matrix; handy for projecting a
/// tensor-valued function onto a scalar in gradient checks.
template <typename Scalar>
Tensor<Scalar> weighted_sum(const Tensor<Scalar>& x, const Matrix<Scalar>& weights) {
  if (weights.rows() != x.rows() || weights.cols() != x.cols()) {
    throw Error(Errc::ShapeMismatch, "weighted_sum weight shape");
  }
  const std::size_t ix = x.id();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = x.value().cwiseProduct(weights).sum();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix, weights](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                           t.accumulate(ix, weights * g(0, 0));
                         });
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> stack_frames(const Matrix<Scalar>& flat, Eigen::Index frames) {
  const Eigen::Index batch = flat.rows();
  const Eigen::Index features = flat.cols() / frames;
  Matrix<Scalar> out(batch * frames, features);
  for (Eigen::Index s = 0; s < batch; ++s)
    for (Eigen::Index f = 0; f < features; ++f)
      for (Eigen::Index t = 0; t < frames; ++t) out(s * frames + t, f) = flat(s, f * frames + t);
  return out;
}

template <typename Scalar>
Matrix<Scalar> flatten_frames(const Matrix<Scalar>& seq, Eigen::Index frames) {
  const Eigen::Index batch = seq.rows() / frames;
  const Eigen::Index features = seq.cols();
  Matrix<Scalar> out(batch, features * frames);
  for (Eigen::Index s = 0; s < batch; ++s)
    for (Eigen::Index f = 0; f < features; ++f)
      for (Eigen::Index t = 0; t < frames; ++t) out(s, f * frames + t) = seq(s * frames + t, f);
  return out;
}

}  // namespace detail

/// [b x F*T] frequency-major patches -> [b*T x F] frame sequences.
template <typename Scalar>
Tensor<Scalar> stack_frames(const Tensor<Scalar>& flat, Eigen::Index frames) {
  if (frames <= 0 || flat.cols() % frames != 0) {
    throw Error(Errc::ShapeMismatch, "stack_frames: width " + std::to_string(flat.cols()) +
                                         " not divisible by " + std::to_string(frames));
  }
  const std::size_t ix = flat.id();
  return flat.tape().record(detail::stack_frames(flat.value(), frames), flat.requires_grad(),
                            [ix, frames](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                              t.accumulate(ix, detail::flatten_frames(g, frames));
                            });
}

/// Inverse of stack_frames: [b*T x F] -> [b x F*T], index f*T + t.
template <typename Scalar>
Tensor<Scalar> flatten_frames(const Tensor<Scalar>& seq, Eigen::Index frames) {
  if (frames <= 0 || seq.rows() % frames != 0) {
    throw Error(Errc::ShapeMismatch, "flatten_frames: rows " + std::to_string(seq.rows()) +
                                         " not divisible by " + std::to_string(frames));
  }
  const std::size_t ix = seq.id();
  return seq.tape().record(detail::flatten_frames(seq.value(), frames), seq.requires_grad(),
                           [ix, frames](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                             t.accumulate(ix, detail::stack_frames(g, frames));
                           });
}

}  // namespace timbre
