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

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "timbre/rng.hpp"
#include "timbre/tensor.hpp"

namespace timbre {

template <typename Scalar>
using ScalarFn = std::function<Tensor<Scalar>(Tape<Scalar>&, std::span<const Tensor<Scalar>>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t input = 0;  // input and flat coordinate of the worst error
  Eigen::Index coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Per coordinate the error is
///   |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// and the maximum over coordinates is reported. When `max_coords` is set
/// and an input is larger than that, a seeded random subset of its
/// coordinates is probed instead of all of them.
template <typename Scalar>
GradCheckResult grad_check(const ScalarFn<Scalar>& f, const std::vector<Matrix<Scalar>>& inputs,
                           Scalar eps, std::optional<std::size_t> max_coords = std::nullopt,
                           std::uint64_t seed = 0) {
  auto evaluate = [&](const std::vector<Matrix<Scalar>>& xs, bool with_grad,
                      std::vector<Matrix<Scalar>>* grads) {
    Tape<Scalar> tape;
    std::vector<Tensor<Scalar>> leaves;
    leaves.reserve(xs.size());
    for (const auto& x : xs) leaves.push_back(tape.leaf(x, with_grad));
    Tensor<Scalar> y = f(tape, leaves);
    if (y.rows() != 1 || y.cols() != 1) {
      throw Error(Errc::ShapeMismatch, "grad_check function must return a scalar");
    }
    if (with_grad) {
      tape.backward(y);
      for (const auto& leaf : leaves) {
        grads->push_back(leaf.grad().size() ? leaf.grad()
                                            : Matrix<Scalar>::Zero(leaf.rows(), leaf.cols()));
      }
    }
    return y.value()(0, 0);
  };

  std::vector<Matrix<Scalar>> analytic;
  evaluate(inputs, true, &analytic);

  GradCheckResult result;
  Rng rng(seed);
  std::vector<Matrix<Scalar>> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(inputs[k].size()));
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<Eigen::Index>(i);
    if (max_coords && coords.size() > *max_coords) {
      rng.shuffle(coords);
      coords.resize(*max_coords);
    }
    for (Eigen::Index c : coords) {
      Scalar& slot = probe[k].data()[c];
      const Scalar original = slot;
      slot = original + eps;
      const double plus = evaluate(probe, false, nullptr);
      slot = original - eps;
      const double minus = evaluate(probe, false, nullptr);
      slot = original;

      const double numeric = (plus - minus) / (2.0 * static_cast<double>(eps));
      const double exact = static_cast<double>(analytic[k].data()[c]);
      const double err =
          std::abs(exact - numeric) / std::max(1e-8, std::abs(exact) + std::abs(numeric));
      ++result.checked;
      if (result.checked == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.input = k;
        result.coord = c;
        result.analytic = exact;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

/// Single-input convenience overload returning only the error.
template <typename Scalar>
double grad_check(const std::function<Tensor<Scalar>(Tape<Scalar>&, const Tensor<Scalar>&)>& f,
                  const Matrix<Scalar>& x, Scalar eps) {
  ScalarFn<Scalar> wrapped = [&f](Tape<Scalar>& t, std::span<const Tensor<Scalar>> xs) {
    return f(t, xs[0]);
  };
  return grad_check<Scalar>(wrapped, {x}, eps).max_rel_error;
}

}  // namespace timbre
