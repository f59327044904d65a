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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "timbre/dataset.hpp"
#include "timbre/metrics.hpp"
#include "timbre/model.hpp"
#include "timbre/rng.hpp"

namespace timbre {
namespace {

namespace fs = std::filesystem;

ConfusionMatrix from_counts(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  ConfusionMatrix cm(20);
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (auto v : row) cm.counts(r, c++) = v;
    ++r;
  }
  return cm;
}

TEST(ConfusionTest, PerfectPredictionsAreDiagonal) {
  const std::vector<int> labels{0, 1, 1, 5, 19, 19, 19};
  const auto cm = confusion(labels, labels);
  EXPECT_EQ(cm.total(), 7);
  EXPECT_EQ(cm.counts.trace(), 7);
  EXPECT_EQ(cm.counts(19, 19), 3);
  EXPECT_EQ(cm.counts(1, 1), 2);
}

TEST(ConfusionTest, SingleMistake) {
  const std::vector<int> preds{3}, labels{0};
  const auto cm = confusion(preds, labels);
  EXPECT_EQ(cm.counts(0, 3), 1);
  EXPECT_EQ(cm.total(), 1);
}

TEST(ConfusionTest, Errors) {
  const std::vector<int> a{1, 2}, b{1}, bad{20};
  EXPECT_THROW(confusion(a, b), Error);
  EXPECT_THROW(confusion(bad, bad), Error);
}

TEST(MetricsTest, TwoClassHandExample) {
  const auto per = per_class_metrics(from_counts({{8, 2}, {1, 9}}));
  EXPECT_DOUBLE_EQ(per[0].precision, 8.0 / 9.0);
  EXPECT_DOUBLE_EQ(per[0].recall, 0.8);
  EXPECT_NEAR(per[0].f1, 0.8421, 1e-4);
  EXPECT_EQ(per[0].support, 10);
  EXPECT_DOUBLE_EQ(per[1].precision, 9.0 / 11.0);
  EXPECT_DOUBLE_EQ(per[1].recall, 0.9);
  EXPECT_EQ(per[2].precision, 0.0);
  EXPECT_EQ(per[2].recall, 0.0);
  EXPECT_EQ(per[2].f1, 0.0);
  EXPECT_EQ(per[2].support, 0);
}

TEST(MetricsTest, DiagonalGivesUnitF1) {
  ConfusionMatrix cm(20);
  for (int c = 0; c < 20; ++c) cm.counts(c, c) = c + 1;
  for (const auto& m : per_class_metrics(cm)) EXPECT_EQ(m.f1, 1.0);
}

TEST(MetricsTest, WeightedAverages) {
  std::vector<ClassMetrics> half{{0.5, 0.5, 0.5, 3}, {0.5, 0.5, 0.5, 11}, {0.5, 0.5, 0.5, 1}};
  EXPECT_DOUBLE_EQ(weighted_average(half).f1, 0.5);
  std::vector<ClassMetrics> two{{1, 1, 1.0, 1}, {0, 0, 0.0, 3}};
  EXPECT_DOUBLE_EQ(weighted_average(two).f1, 0.25);
  std::vector<ClassMetrics> none{{1, 1, 1, 0}};
  try {
    weighted_average(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroTotalSupport);
  }
}

TEST(MetricsTest, ReportMatchesBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(300));
    std::vector<int> preds(n), labels(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.below(20));
      preds[i] = rng.uniform() < 0.4 ? labels[i] : static_cast<int>(rng.below(20));
    }
    const auto report = make_report(preds, labels, 0.0);
    double wp = 0, wr = 0, wf = 0;
    int hits = 0;
    for (int c = 0; c < 20; ++c) {
      std::int64_t tp = 0, predicted = 0, support = 0;
      for (int i = 0; i < n; ++i) {
        tp += preds[i] == c && labels[i] == c;
        predicted += preds[i] == c;
        support += labels[i] == c;
      }
      hits += static_cast<int>(tp);
      const double p = predicted ? double(tp) / double(predicted) : 0.0;
      const double r = support ? double(tp) / double(support) : 0.0;
      const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
      const auto& m = report.per_class[static_cast<std::size_t>(c)];
      EXPECT_EQ(m.precision, p);
      EXPECT_EQ(m.recall, r);
      EXPECT_EQ(m.f1, f);
      EXPECT_EQ(m.support, support);
      wp += double(support) * p;
      wr += double(support) * r;
      wf += double(support) * f;
    }
    EXPECT_EQ(report.weighted.precision, wp / n);
    EXPECT_EQ(report.weighted.recall, wr / n);
    EXPECT_EQ(report.weighted.f1, wf / n);
    EXPECT_EQ(report.accuracy, double(hits) / n);
  }
}

TEST(MetricsTest, WeightedRecallEqualsAccuracy) {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionMatrix cm(20);
    for (Eigen::Index i = 0; i < cm.counts.size(); ++i) {
      cm.counts.data()[i] = rng.uniform() < 0.3 ? 0 : static_cast<std::int64_t>(rng.below(50));
    }
    if (cm.total() == 0) cm.counts(0, 0) = 1;
    const auto w = weighted_average(per_class_metrics(cm));
    EXPECT_NEAR(w.recall, double(cm.counts.trace()) / double(cm.total()), 1e-12);
  }
}

TEST(MetricsTest, WeightedMetricsAreInvariantToSampleOrder) {
  Rng rng(23);
  std::vector<int> preds(200), labels(200);
  for (int i = 0; i < 200; ++i) {
    preds[i] = static_cast<int>(rng.below(20));
    labels[i] = static_cast<int>(rng.below(20));
  }
  const auto a = make_report(preds, labels, 0.0);
  std::vector<int> order(200);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<int> p2, l2;
  for (int i : order) p2.push_back(preds[i]), l2.push_back(labels[i]);
  const auto b = make_report(p2, l2, 0.0);
  EXPECT_EQ(a.weighted.f1, b.weighted.f1);
  EXPECT_EQ(a.confusion.counts, b.confusion.counts);
}

TEST(MetricsTest, ArgmaxTiesGoToLowestIndex) {
  Eigen::MatrixXd z(2, 3);
  z << 1, 5, 5, 0, 0, 0;
  EXPECT_EQ(argmax_rows(z), (std::vector<int>{1, 0}));
  EXPECT_EQ(argmax_rows(Eigen::MatrixXf(z.cast<float>())), (std::vector<int>{1, 0}));
}

TEST(ReportTest, JsonAndConfusionCsv) {
  const auto dir = fs::temp_directory_path() / "timbre_report_test";
  fs::create_directories(dir);
  const std::vector<int> preds{0, 1, 1}, labels{0, 1, 0};
  const auto report = make_report(preds, labels, 1.5);
  const std::vector<std::string_view> names(kClassNames.begin(), kClassNames.end());
  write_report_json(dir / "r.json", report, names);
  std::ifstream in(dir / "r.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["loss"], 1.5);
  EXPECT_EQ(j["samples"], 3);
  EXPECT_DOUBLE_EQ(j["weighted"]["recall"].get<double>(), 2.0 / 3.0);

  write_confusion_csv(dir / "cm.csv", report.confusion, names);
  std::ifstream csv(dir / "cm.csv");
  std::string header, row0;
  std::getline(csv, header);
  std::getline(csv, row0);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 20);
  EXPECT_EQ(row0.rfind("violin,1,1,0", 0), 0u);
  fs::remove_all(dir);
}

TEST(AttentionExportTest, FilesAndContents) {
  const auto dir = fs::temp_directory_path() / "timbre_attention_export";
  fs::remove_all(dir);
  Rng rng(24);
  const auto spec = ModelSpec::attention(8);
  const auto params = build<double>(spec, rng);
  Eigen::MatrixXd patch(128, 22);
  for (Eigen::Index i = 0; i < patch.size(); ++i) patch.data()[i] = rng.normal();
  const auto trace = attention_trace(spec, params, patch);
  const auto files = export_attention(trace, patch, dir, "violin_G6");
  EXPECT_EQ(files.size(), 10u);
  for (const auto& f : files) EXPECT_TRUE(fs::exists(f)) << f;
  EXPECT_TRUE(fs::exists(dir / "violin_G6.head0.csv"));
  EXPECT_TRUE(fs::exists(dir / "violin_G6.head7.csv"));

  const auto avg = read_csv_matrix(dir / "violin_G6.avg.csv");
  ASSERT_EQ(avg.rows(), 22);
  ASSERT_EQ(avg.cols(), 22);
  EXPECT_TRUE(avg == trace.averaged);
  EXPECT_LT((avg.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-5);

  const auto act = read_csv_matrix(dir / "violin_G6.act.csv");
  ASSERT_EQ(act.rows(), 128);
  ASSERT_EQ(act.cols(), 22);
  EXPECT_LT((act - patch * trace.averaged.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace timbre
