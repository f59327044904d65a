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

#include "timbre/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "timbre/error.hpp"
#include "timbre/rng.hpp"

namespace timbre {
namespace fs = std::filesystem;

namespace {

// Philharmonia file names and common spellings of the named instruments.
constexpr std::pair<std::string_view, std::string_view> kBuiltinAliases[] = {
    {"cor-anglais", "english-horn"},   {"english-horn", "english-horn"}, {"englishhorn", "english-horn"},
    {"double-bass", "double-bass"},    {"doublebass", "double-bass"},    {"contrabass", "double-bass"},
    {"contra-bassoon", "contrabassoon"}, {"bass-clarinet", "bass-clarinet"},
    {"bassclarinet", "bass-clarinet"}, {"horn", "french-horn"},          {"french-horn", "french-horn"},
    {"sax", "saxophone"},              {"alto-saxophone", "saxophone"},  {"violoncello", "cello"},
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::string normalize_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char c : trim(token)) {
    if (c == ' ' || c == '_') {
      out.push_back('-');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

ClassTable ClassTable::standard() {
  ClassTable table;
  for (int i = 0; i < kNumClasses; ++i) table.lookup_.emplace(std::string(kClassNames[i]), i);
  for (const auto& [alias, canonical] : kBuiltinAliases) table.add_alias(alias, canonical);
  return table;
}

void ClassTable::add_alias(std::string_view alias, std::string_view canonical) {
  const std::string target = normalize_token(canonical);
  const auto it = std::find(kClassNames.begin(), kClassNames.end(), target);
  if (it == kClassNames.end()) {
    throw Error(Errc::BadFormat, "alias target '" + target + "' is not one of the 20 classes");
  }
  lookup_[normalize_token(alias)] = static_cast<int>(it - kClassNames.begin());
}

void ClassTable::load_aliases(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    std::string alias, canonical;
    // Canonical names never contain spaces, so the last field is the target.
    const auto sep = body.find_last_of(" \t");
    if (sep != std::string::npos) {
      alias = trim(body.substr(0, sep));
      canonical = trim(body.substr(sep + 1));
    }
    if (alias.empty() || canonical.empty()) {
      throw Error(Errc::BadFormat, path.string() + ":" + std::to_string(line_no) + ": expected two fields");
    }
    add_alias(alias, canonical);
  }
}

int ClassTable::index_of(std::string_view token) const {
  const auto it = lookup_.find(normalize_token(token));
  return it == lookup_.end() ? kChromaticPercussion : it->second;
}

std::string parse_label(std::string_view filename) {
  std::string stem = fs::path(std::string(filename)).stem().string();
  const auto underscore = stem.find('_');
  if (stem.empty() || underscore == std::string::npos || underscore == 0) {
    throw Error(Errc::MalformedName, "no underscore-separated label in '" + std::string(filename) + "'");
  }
  std::string token = stem.substr(0, underscore);
  for (char& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return token;
}

int map_class(std::string_view token, const ClassTable& table) { return table.index_of(token); }

std::string_view split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw Error(Errc::BadFormat, "unknown split '" + std::string(name) + "'");
}

std::vector<SampleRecord> SplitPlan::select(Split split) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

std::array<std::array<int, 3>, kNumClasses> SplitPlan::histogram() const {
  std::array<std::array<int, 3>, kNumClasses> counts{};
  for (const auto& r : records) ++counts.at(static_cast<std::size_t>(r.class_index))[static_cast<int>(r.split)];
  return counts;
}

ScanResult scan_corpus(const fs::path& root, const ClassTable& table) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(Errc::EmptyDataset, "cannot read corpus root " + root.string());
  ScanResult result;
  fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw Error(Errc::EmptyDataset, "cannot read corpus root " + root.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext != ".wav") continue;
    const std::string rel = fs::relative(entry.path(), root).generic_string();
    try {
      SampleRecord rec;
      rec.path = rel;
      rec.instrument = parse_label(entry.path().filename().string());
      rec.class_index = map_class(rec.instrument, table);
      result.records.push_back(std::move(rec));
    } catch (const Error&) {
      result.skipped.push_back(rel);
    }
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });
  std::sort(result.skipped.begin(), result.skipped.end());
  if (result.records.empty()) throw Error(Errc::EmptyDataset, "no labelled .wav files under " + root.string());
  return result;
}

SplitPlan make_split(std::vector<SampleRecord> records, const SplitRatios& ratios, std::uint64_t seed) {
  if (records.empty()) throw Error(Errc::EmptyDataset, "nothing to split");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0) throw Error(Errc::InvalidRange, "negative split ratio");
  std::sort(records.begin(), records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });

  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int c = records[i].class_index;
    if (c < 0 || c >= kNumClasses) throw Error(Errc::IndexOutOfRange, "class index " + std::to_string(c));
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  Rng rng(seed);
  for (auto& members : by_class) {
    rng.shuffle(members);
    const auto n = static_cast<long>(members.size());
    const long n_train = std::min(n, std::lround(ratios.train * double(n)));
    const long n_val = std::min(n - n_train, std::lround(ratios.val * double(n)));
    for (long k = 0; k < n; ++k) {
      records[members[static_cast<std::size_t>(k)]].split =
          k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
    }
  }
  return SplitPlan{ratios, seed, std::move(records)};
}

void write_manifest(const fs::path& path, const SplitPlan& plan) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write manifest " + path.string());
  for (const auto& r : plan.records) {
    out << split_name(r.split) << '\t' << r.class_index << '\t' << r.path << '\n';
  }
}

SplitPlan read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingCache, "manifest " + path.string());
  SplitPlan plan;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error(Errc::BadFormat, path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    SampleRecord rec;
    rec.split = parse_split(line.substr(0, t1));
    try {
      rec.class_index = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
    } catch (const std::exception&) {
      throw Error(Errc::BadFormat, path.string() + ":" + std::to_string(line_no) + ": bad class index");
    }
    if (rec.class_index < 0 || rec.class_index >= kNumClasses) {
      throw Error(Errc::IndexOutOfRange, path.string() + ":" + std::to_string(line_no));
    }
    rec.path = line.substr(t2 + 1);
    rec.instrument = parse_label(fs::path(rec.path).filename().string());
    plan.records.push_back(std::move(rec));
  }
  std::sort(plan.records.begin(), plan.records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });
  return plan;
}

CachePaths CachePaths::in(const fs::path& dir) {
  return {dir / "train.tmbf", dir / "val.tmbf", dir / "test.tmbf", dir / "norm.tmbs"};
}

const fs::path& CachePaths::of(Split split) const {
  switch (split) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

CacheBuildSummary build_cache(const SplitPlan& plan, const fs::path& root, const DspParams& params,
                              const fs::path& out_dir, int jobs) {
  const std::size_t n = plan.records.size();
  std::vector<std::optional<LogMelPatch>> patches(n);
  std::vector<std::string> failures(n);

  auto work = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t i = worker; i < n; i += stride) {
      try {
        patches[i] = extract_patch(root / plan.records[i].path, params);
      } catch (const Error& e) {
        failures[i] = e.what();
      }
    }
  };
  const std::size_t threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }

  CacheBuildSummary summary;
  std::vector<LogMelPatch> train_patches;
  for (std::size_t i = 0; i < n; ++i) {
    if (!patches[i]) {
      summary.skipped.emplace_back(plan.records[i].path, failures[i]);
      continue;
    }
    if (plan.records[i].split == Split::Train) train_patches.push_back(*patches[i]);
  }
  if (train_patches.empty()) throw Error(Errc::EmptyDataset, "no usable training samples");
  const NormStats stats = fit_norm_stats(train_patches);

  const CachePaths paths = CachePaths::in(out_dir);
  fs::create_directories(out_dir);
  for (Split split : {Split::Train, Split::Val, Split::Test}) {
    FeatureCache cache;
    cache.n_mels = params.n_mels;
    cache.n_frames = params.frames;
    for (std::size_t i = 0; i < n; ++i) {
      if (!patches[i] || plan.records[i].split != split) continue;
      const LogMelPatch normalized = normalize_patch(*patches[i], stats);
      cache.entries.push_back({plan.records[i].class_index, plan.records[i].path, normalized.values.cast<float>()});
    }
    summary.written[static_cast<std::size_t>(split)] = static_cast<int>(cache.entries.size());
    write_feature_cache(paths.of(split), cache);
  }
  write_norm_stats(paths.stats, stats);
  return summary;
}

}  // namespace timbre
