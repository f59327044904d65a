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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "timbre/feature_cache.hpp"
#include "timbre/metrics.hpp"
#include "timbre/model.hpp"

namespace timbre {

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 1e-5;
  int batch_size = 16;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 300;
  int patience = 20;
  std::uint64_t seed = 42;

  void validate() const;
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;
  std::int64_t step = 0;

  static AdamState like(const ParamSet<Scalar>& params) {
    AdamState s;
    for (const auto& e : params) {
      s.m.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
      s.v.push_back(Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
    }
    return s;
  }
};

/// One Adam update with L2 weight decay folded into the gradient:
///   g' = g + wd * theta
///   m <- b1 m + (1 - b1) g',  v <- b2 v + (1 - b2) g'^2
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads, AdamState<Scalar>& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "adam_step: parameter, gradient and state counts differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto wd = static_cast<Scalar>(cfg.weight_decay);
  const auto step_size = static_cast<Scalar>(cfg.learning_rate / c1);
  const auto inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
  const auto eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix<Scalar>& theta = params[i].value;
    const Matrix<Scalar>& g = grads[i].value;
    if (g.rows() != theta.rows() || g.cols() != theta.cols() || grads[i].name != params[i].name) {
      throw Error(Errc::ShapeMismatch, "adam_step: gradient for " + params[i].name);
    }
    Matrix<Scalar> effective = g + wd * theta;
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * effective;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * effective.cwiseProduct(effective);
    theta.array() -= step_size * state.m[i].array() / (state.v[i].array().sqrt() * inv_sqrt_c2 + eps);
  }
}

struct EpochRecord {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  /// `epoch,train_loss,val_loss,val_f1,seconds`
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainHooks {
  std::filesystem::path checkpoint;  // best-val checkpoint, written when non-empty
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<bool(const EpochRecord&)> stop;  // extra stop criterion
};

struct TrainResult {
  ParamSet<float> params;  // after the last epoch
  ParamSet<float> best_params;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  TrainLog log;
};

/// Loss, predictions and metrics of `params` on a labelled set.
EvalReport evaluate(const ModelSpec& spec, const ParamSet<float>& params, const LabeledSet& set,
                    int batch_size = 256);

/// Seeded mini-batch Adam training with early stopping on validation loss.
/// Throws EmptyCache for empty sets and NonFiniteLoss if a batch loss is not finite.
TrainResult train(const ModelSpec& spec, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

struct AblationRow {
  ModelSpec spec;
  EvalReport test;
  int best_epoch = 0;
};

/// Trains every variant and evaluates its best-validation parameters on the test set.
std::vector<AblationRow> run_ablation(const std::vector<ModelSpec>& variants, const LabeledSet& train_set,
                                      const LabeledSet& val_set, const LabeledSet& test_set,
                                      const TrainConfig& cfg,
                                      const std::function<void(const ModelSpec&, const EpochRecord&)>& progress = {});

/// h = 1, 8, 16 and the fully-connected baseline.
std::vector<ModelSpec> default_ablation_variants();

/// `model,loss,P,R,F1` rows.
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace timbre
