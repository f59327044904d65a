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

#include "timbre/metrics.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "timbre/error.hpp"

namespace timbre {
namespace fs = std::filesystem;

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_classes() != n_classes()) throw Error(Errc::ShapeMismatch, "confusion class counts differ");
  counts += other.counts;
  return *this;
}

namespace {

template <typename M>
std::vector<int> argmax_rows_impl(const M& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

double ratio(std::int64_t num, std::int64_t den) { return den == 0 ? 0.0 : double(num) / double(den); }

}  // namespace

std::vector<int> argmax_rows(const Eigen::MatrixXf& logits) { return argmax_rows_impl(logits); }
std::vector<int> argmax_rows(const Eigen::MatrixXd& logits) { return argmax_rows_impl(logits); }

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels, int n_classes) {
  if (preds.size() != labels.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                          std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= n_classes || labels[i] < 0 || labels[i] >= n_classes) {
      throw Error(Errc::IndexOutOfRange, "class index outside [0," + std::to_string(n_classes) + ")");
    }
    ++cm.counts(labels[i], preds[i]);
  }
  return cm;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out(static_cast<std::size_t>(cm.n_classes()));
  for (int c = 0; c < cm.n_classes(); ++c) {
    const std::int64_t hit = cm.counts(c, c);
    ClassMetrics m;
    m.support = cm.counts.row(c).sum();
    m.precision = ratio(hit, cm.counts.col(c).sum());
    m.recall = ratio(hit, m.support);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    out[static_cast<std::size_t>(c)] = m;
  }
  return out;
}

WeightedMetrics weighted_average(std::span<const ClassMetrics> per_class) {
  std::int64_t total = 0;
  WeightedMetrics w;
  for (const auto& m : per_class) {
    total += m.support;
    w.precision += double(m.support) * m.precision;
    w.recall += double(m.support) * m.recall;
    w.f1 += double(m.support) * m.f1;
  }
  if (total == 0) throw Error(Errc::ZeroTotalSupport, "no class has any support");
  w.precision /= double(total);
  w.recall /= double(total);
  w.f1 /= double(total);
  return w;
}

EvalReport make_report(std::span<const int> preds, std::span<const int> labels, double loss, int n_classes) {
  EvalReport report{confusion(preds, labels, n_classes), {}, {}, loss, 0.0};
  report.per_class = per_class_metrics(report.confusion);
  report.weighted = weighted_average(report.per_class);
  report.accuracy = ratio(report.confusion.counts.trace(), report.confusion.total());
  return report;
}

std::string report_json(const EvalReport& report, std::span<const std::string_view> class_names) {
  nlohmann::ordered_json j;
  j["loss"] = report.loss;
  j["accuracy"] = report.accuracy;
  j["samples"] = report.confusion.total();
  j["weighted"] = {{"precision", report.weighted.precision},
                   {"recall", report.weighted.recall},
                   {"f1", report.weighted.f1}};
  auto classes = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    classes.push_back({{"class", c < class_names.size() ? std::string(class_names[c]) : std::to_string(c)},
                       {"index", c},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
  }
  j["per_class"] = std::move(classes);
  auto rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < report.confusion.counts.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < report.confusion.counts.cols(); ++c) row.push_back(report.confusion.counts(r, c));
    rows.push_back(std::move(row));
  }
  j["confusion"] = std::move(rows);
  return j.dump(2);
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  return out;
}

}  // namespace

void write_report_json(const fs::path& path, const EvalReport& report,
                       std::span<const std::string_view> class_names) {
  auto out = open_out(path);
  out << report_json(report, class_names) << '\n';
}

void write_confusion_csv(const fs::path& path, const ConfusionMatrix& cm,
                         std::span<const std::string_view> class_names) {
  auto out = open_out(path);
  auto name = [&](int c) { return c < int(class_names.size()) ? std::string(class_names[c]) : std::to_string(c); };
  out << "true\\predicted";
  for (int c = 0; c < cm.n_classes(); ++c) out << ',' << name(c);
  out << '\n';
  for (int r = 0; r < cm.n_classes(); ++r) {
    out << name(r);
    for (int c = 0; c < cm.n_classes(); ++c) out << ',' << cm.counts(r, c);
    out << '\n';
  }
}

void write_csv_matrix(const fs::path& path, const Eigen::MatrixXd& m) {
  auto out = open_out(path);
  out.precision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(Errc::BadFormat, path.string() + ": non-numeric cell '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw Error(Errc::BadFormat, path.string() + ": ragged");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
  return m;
}

Eigen::MatrixXd attention_activation(const AttentionTrace<double>& trace, const Eigen::MatrixXd& patch) {
  if (patch.cols() != trace.averaged.rows()) throw Error(Errc::ShapeMismatch, "patch frames vs trace size");
  return patch * trace.averaged.transpose();
}

std::vector<fs::path> export_attention(const AttentionTrace<double>& trace, const Eigen::MatrixXd& patch,
                                       const fs::path& dir, const std::string& stem) {
  std::vector<fs::path> written;
  for (std::size_t h = 0; h < trace.per_head.size(); ++h) {
    written.push_back(dir / (stem + ".head" + std::to_string(h) + ".csv"));
    write_csv_matrix(written.back(), trace.per_head[h]);
  }
  written.push_back(dir / (stem + ".avg.csv"));
  write_csv_matrix(written.back(), trace.averaged);
  written.push_back(dir / (stem + ".act.csv"));
  write_csv_matrix(written.back(), attention_activation(trace, patch));
  return written;
}

}  // namespace timbre
