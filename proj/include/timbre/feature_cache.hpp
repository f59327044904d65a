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

// Binary feature caches.
//
// TMBF: "TMBF", u32 version (1), u32 n_samples, u32 n_mels, u32 n_frames, then
// per sample: u32 class_index, u16 path length, path bytes (UTF-8),
// n_mels*n_frames f32 values in frequency-major order. All little-endian.
//
// TMBS: "TMBS", n_mels f32 means, n_mels f32 standard deviations.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "timbre/dsp.hpp"

namespace timbre {

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

struct CacheEntry {
  int class_index = 0;
  std::string path;
  Eigen::MatrixXf values;  // [n_mels x n_frames]

  bool operator==(const CacheEntry& o) const {
    return class_index == o.class_index && path == o.path && values.rows() == o.values.rows() &&
           values.cols() == o.values.cols() && values == o.values;
  }
};

struct FeatureCache {
  int n_mels = 128;
  int n_frames = 22;
  std::vector<CacheEntry> entries;
};

void write_feature_cache(const std::filesystem::path& path, const FeatureCache& cache);
FeatureCache read_feature_cache(const std::filesystem::path& path);

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_norm_stats(const std::filesystem::path& path, int n_mels = 128);

/// Features as model input rows [n x n_mels*n_frames] plus labels.
struct LabeledSet {
  Eigen::MatrixXf features;
  std::vector<int> labels;
  std::vector<std::string> paths;

  Eigen::Index size() const { return features.rows(); }
};

LabeledSet to_labeled_set(const FeatureCache& cache);

}  // namespace timbre
