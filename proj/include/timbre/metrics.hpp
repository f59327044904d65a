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

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "timbre/layers.hpp"

namespace timbre {

/// counts(true, predicted).
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  explicit ConfusionMatrix(int n_classes = 20)
      : counts(Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n_classes, n_classes)) {}

  int n_classes() const { return static_cast<int>(counts.rows()); }
  std::int64_t total() const { return counts.sum(); }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct WeightedMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  ConfusionMatrix confusion;
  std::vector<ClassMetrics> per_class;
  WeightedMetrics weighted;
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Index of the largest entry in each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Eigen::MatrixXf& logits);
std::vector<int> argmax_rows(const Eigen::MatrixXd& logits);

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int n_classes = 20);

/// P = diag/colsum, R = diag/rowsum, F1 = 2PR/(P+R); 0 wherever a denominator vanishes.
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

/// Support-weighted means. Throws ZeroTotalSupport when every support is 0.
WeightedMetrics weighted_average(std::span<const ClassMetrics> per_class);

EvalReport make_report(std::span<const int> preds, std::span<const int> labels, double loss, int n_classes = 20);

std::string report_json(const EvalReport& report, std::span<const std::string_view> class_names);
void write_report_json(const std::filesystem::path& path, const EvalReport& report,
                       std::span<const std::string_view> class_names);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         std::span<const std::string_view> class_names);

void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path);

/// Averaged weights applied along time to a [n_mels x T] patch: patch * avg^T.
Eigen::MatrixXd attention_activation(const AttentionTrace<double>& trace, const Eigen::MatrixXd& patch);

/// Writes <stem>.head<i>.csv for every head, <stem>.avg.csv and <stem>.act.csv.
std::vector<std::filesystem::path> export_attention(const AttentionTrace<double>& trace,
                                                    const Eigen::MatrixXd& patch,
                                                    const std::filesystem::path& dir, const std::string& stem);

}  // namespace timbre
