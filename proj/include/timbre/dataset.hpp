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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "timbre/dsp.hpp"
#include "timbre/feature_cache.hpp"

namespace timbre {

inline constexpr int kNumClasses = 20;
inline constexpr int kChromaticPercussion = 19;

/// The 20 output classes in their frozen index order.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "violin",  "viola",         "cello",     "double-bass", "guitar",       "banjo",       "mandolin",
    "clarinet", "bass-clarinet", "saxophone", "flute",      "oboe",         "bassoon",     "contrabassoon",
    "english-horn", "french-horn", "trombone", "trumpet",  "tuba",         "chromatic-percussion"};

/// Instrument token -> class index. Unknown tokens fall back to chromatic percussion.
class ClassTable {
 public:
  /// Canonical names plus the built-in alias list.
  static ClassTable standard();

  /// Adds aliases from a text file: `alias <TAB or spaces> canonical-name`, `#` comments.
  void load_aliases(const std::filesystem::path& path);
  void add_alias(std::string_view alias, std::string_view canonical);

  int index_of(std::string_view token) const;
  static std::string_view name(int index) { return kClassNames.at(static_cast<std::size_t>(index)); }

 private:
  std::map<std::string, int, std::less<>> lookup_;
};

/// Lowercases and folds spaces/underscores to '-'.
std::string normalize_token(std::string_view token);

/// Leading underscore-separated token of a file name, lowercased, extension stripped.
std::string parse_label(std::string_view filename);

int map_class(std::string_view token, const ClassTable& table);

enum class Split { Train, Val, Test };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct SampleRecord {
  std::string path;  // relative to the corpus root, '/'-separated
  std::string instrument;
  int class_index = 0;
  Split split = Split::Train;

  bool operator==(const SampleRecord&) const = default;
};

struct SplitRatios {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;
};

struct SplitPlan {
  SplitRatios ratios;
  std::uint64_t seed = 42;
  std::vector<SampleRecord> records;  // sorted by path

  std::vector<SampleRecord> select(Split split) const;
  /// counts[class][split]
  std::array<std::array<int, 3>, kNumClasses> histogram() const;
};

struct ScanResult {
  std::vector<SampleRecord> records;  // sorted by path, split unassigned
  std::vector<std::string> skipped;   // files whose names carry no label
};

/// Recursively lists `.wav` files under `root`. Throws EmptyDataset if none are usable.
ScanResult scan_corpus(const std::filesystem::path& root, const ClassTable& table);

/// Stratified split: per class, seeded shuffle then proportional cut with rounding.
SplitPlan make_split(std::vector<SampleRecord> records, const SplitRatios& ratios, std::uint64_t seed);

void write_manifest(const std::filesystem::path& path, const SplitPlan& plan);
SplitPlan read_manifest(const std::filesystem::path& path);

struct CacheBuildSummary {
  std::array<int, 3> written{};  // per split
  std::vector<std::pair<std::string, std::string>> skipped;  // path, reason
};

struct CachePaths {
  std::filesystem::path train, val, test, stats;

  static CachePaths in(const std::filesystem::path& dir);
  const std::filesystem::path& of(Split split) const;
};

/// Extracts patches for every record (in parallel over `jobs` threads),
/// fits normalization statistics on the training split and writes all caches.
/// Per-file failures are recorded in the summary and excluded.
CacheBuildSummary build_cache(const SplitPlan& plan, const std::filesystem::path& root,
                              const DspParams& params, const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace timbre
