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

#include "timbre/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "timbre/checkpoint.hpp"

namespace timbre {

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(weight_decay >= 0) || batch_size < 1 || !(beta1 > 0 && beta1 < 1) ||
      !(beta2 > 0 && beta2 < 1) || !(eps > 0) || max_epochs < 0 || patience < 1) {
    throw Error(Errc::InvalidRange, "invalid training configuration");
  }
}

std::string TrainLog::csv() const {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "epoch,train_loss,val_loss,val_f1,seconds\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_f1 << ',' << e.seconds << '\n';
  }
  return out.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << csv();
}

namespace {

// Mean cross-entropy in double from float logits.
double mean_cross_entropy(const Eigen::MatrixXf& logits, std::span<const int> labels) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::RowVectorXd z = logits.row(i).cast<double>();
    const double max = z.maxCoeff();
    const double lse = max + std::log((z.array() - max).exp().sum());
    total += lse - z(labels[static_cast<std::size_t>(i)]);
  }
  return logits.rows() ? total / double(logits.rows()) : 0.0;
}

Eigen::MatrixXf gather_rows(const Eigen::MatrixXf& src, std::span<const std::size_t> rows) {
  Eigen::MatrixXf out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(Eigen::Index(rows[i]));
  return out;
}

}  // namespace

EvalReport evaluate(const ModelSpec& spec, const ParamSet<float>& params, const LabeledSet& set, int batch_size) {
  if (set.size() == 0) throw Error(Errc::EmptyCache, "cannot evaluate on an empty set");
  Eigen::MatrixXf logits(set.size(), spec.n_classes);
  for (Eigen::Index start = 0; start < set.size(); start += batch_size) {
    const Eigen::Index n = std::min<Eigen::Index>(batch_size, set.size() - start);
    logits.middleRows(start, n) = predict<float>(spec, params, set.features.middleRows(start, n));
  }
  for (int label : set.labels) {
    if (label < 0 || label >= spec.n_classes) throw Error(Errc::LabelOutOfRange, std::to_string(label));
  }
  const double loss = mean_cross_entropy(logits, set.labels);
  const std::vector<int> preds = argmax_rows(logits);
  return make_report(preds, set.labels, loss, spec.n_classes);
}

TrainResult train(const ModelSpec& spec, const LabeledSet& train_set, const LabeledSet& val_set,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.size() == 0) throw Error(Errc::EmptyCache, "training set is empty");
  if (val_set.size() == 0) throw Error(Errc::EmptyCache, "validation set is empty");

  Rng init_rng(cfg.seed);
  TrainResult result;
  result.params = build<float>(spec, init_rng);
  AdamState<float> state = AdamState<float>::like(result.params);

  auto record_epoch = [&](int epoch, double train_loss, double seconds) {
    const EvalReport val = evaluate(spec, result.params, val_set);
    EpochRecord rec{epoch, train_loss, val.loss, val.weighted.f1, val.accuracy, seconds};
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      throw Error(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch) + " produced a non-finite loss");
    }
    result.log.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    return rec;
  };
  auto keep_best = [&](const EpochRecord& rec) {
    result.best_params = result.params;
    result.best_epoch = rec.epoch;
    result.best_val_loss = rec.val_loss;
    if (!hooks.checkpoint.empty()) save_checkpoint(hooks.checkpoint, {spec, result.params, cfg.seed, rec.epoch});
  };

  const auto initial = record_epoch(0, evaluate(spec, result.params, train_set).loss, 0.0);
  keep_best(initial);
  if (hooks.stop && hooks.stop(initial)) return result;

  const std::size_t n = static_cast<std::size_t>(train_set.size());
  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(static_cast<std::size_t>(cfg.batch_size), n - start);
      std::span<const std::size_t> rows(order.data() + start, count);
      std::vector<int> labels;
      labels.reserve(count);
      for (std::size_t r : rows) labels.push_back(train_set.labels[r]);
      auto step = loss_and_grad<float>(spec, result.params, gather_rows(train_set.features, rows), labels);
      if (!std::isfinite(step.loss)) {
        throw Error(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", batch at " +
                                             std::to_string(start) + ": loss " + std::to_string(step.loss));
      }
      loss_sum += double(step.loss) * double(count);
      adam_step(result.params, step.grads, state, cfg);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const auto rec = record_epoch(epoch, loss_sum / double(n), seconds);
    if (rec.val_loss < result.best_val_loss) keep_best(rec);
    if (hooks.stop && hooks.stop(rec)) break;
    if (epoch - result.best_epoch >= cfg.patience) break;
  }
  return result;
}

std::vector<ModelSpec> default_ablation_variants() {
  return {ModelSpec::attention(1), ModelSpec::attention(8), ModelSpec::attention(16), ModelSpec::fc()};
}

std::vector<AblationRow> run_ablation(const std::vector<ModelSpec>& variants, const LabeledSet& train_set,
                                      const LabeledSet& val_set, const LabeledSet& test_set,
                                      const TrainConfig& cfg,
                                      const std::function<void(const ModelSpec&, const EpochRecord&)>& progress) {
  if (test_set.size() == 0) throw Error(Errc::EmptyCache, "test set is empty");
  std::vector<AblationRow> rows;
  for (const auto& spec : variants) {
    TrainHooks hooks;
    if (progress) hooks.on_epoch = [&](const EpochRecord& rec) { progress(spec, rec); };
    TrainResult trained = train(spec, train_set, val_set, cfg, hooks);
    rows.push_back({spec, evaluate(spec, trained.best_params, test_set), trained.best_epoch});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "model,loss,P,R,F1\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f\n", r.spec.label().c_str(), r.test.loss,
                  r.test.weighted.precision, r.test.weighted.recall, r.test.weighted.f1);
    out << line;
  }
  return out.str();
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %6s %6s %6s %6s\n", "Model", "Loss", "P", "R", "F1");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-24s %6.2f %6.2f %6.2f %6.2f\n", r.spec.label().c_str(), r.test.loss,
                  r.test.weighted.precision, r.test.weighted.recall, r.test.weighted.f1);
    out << line;
  }
  return out.str();
}

}  // namespace timbre
