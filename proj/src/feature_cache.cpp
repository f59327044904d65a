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

#include "timbre/feature_cache.hpp"

#include <limits>

#include "binary_io.hpp"
#include "timbre/model.hpp"

namespace timbre {

void write_feature_cache(const std::filesystem::path& path, const FeatureCache& cache) {
  bin::Writer w;
  w.bytes("TMBF");
  w.u32(kFeatureCacheVersion);
  w.u32(static_cast<std::uint32_t>(cache.entries.size()));
  w.u32(static_cast<std::uint32_t>(cache.n_mels));
  w.u32(static_cast<std::uint32_t>(cache.n_frames));
  for (const auto& e : cache.entries) {
    if (e.values.rows() != cache.n_mels || e.values.cols() != cache.n_frames) {
      throw Error(Errc::ShapeMismatch, "cache entry " + e.path + " has the wrong shape");
    }
    if (e.path.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(Errc::BadFormat, "path too long for cache: " + e.path);
    }
    w.u32(static_cast<std::uint32_t>(e.class_index));
    w.u16(static_cast<std::uint16_t>(e.path.size()));
    w.bytes(e.path);
    for (Eigen::Index r = 0; r < e.values.rows(); ++r)
      for (Eigen::Index c = 0; c < e.values.cols(); ++c) w.f32(e.values(r, c));
  }
  w.save(path);
}

FeatureCache read_feature_cache(const std::filesystem::path& path) {
  auto r = bin::Reader::open(path, Errc::MissingCache);
  r.expect_magic("TMBF");
  const std::uint32_t version = r.u32();
  if (version != kFeatureCacheVersion) {
    throw Error(Errc::BadFormat, path.string() + ": unsupported cache version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32();
  FeatureCache cache;
  cache.n_mels = static_cast<int>(r.u32());
  cache.n_frames = static_cast<int>(r.u32());
  if (cache.n_mels <= 0 || cache.n_frames <= 0) throw Error(Errc::BadFormat, path.string() + ": bad shape");
  cache.entries.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    CacheEntry e;
    e.class_index = static_cast<int>(r.u32());
    e.path = r.str(r.u16());
    e.values.resize(cache.n_mels, cache.n_frames);
    for (Eigen::Index row = 0; row < e.values.rows(); ++row)
      for (Eigen::Index col = 0; col < e.values.cols(); ++col) e.values(row, col) = r.f32();
    cache.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw Error(Errc::BadFormat, path.string() + ": trailing bytes");
  return cache;
}

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  if (stats.mean.size() != stats.std.size()) throw Error(Errc::ShapeMismatch, "mean/std length differ");
  bin::Writer w;
  w.bytes("TMBS");
  for (Eigen::Index i = 0; i < stats.mean.size(); ++i) w.f32(static_cast<float>(stats.mean(i)));
  for (Eigen::Index i = 0; i < stats.std.size(); ++i) w.f32(static_cast<float>(stats.std(i)));
  w.save(path);
}

NormStats read_norm_stats(const std::filesystem::path& path, int n_mels) {
  auto r = bin::Reader::open(path, Errc::MissingCache);
  r.expect_magic("TMBS");
  NormStats stats;
  stats.mean.resize(n_mels);
  stats.std.resize(n_mels);
  for (int i = 0; i < n_mels; ++i) stats.mean(i) = r.f32();
  for (int i = 0; i < n_mels; ++i) stats.std(i) = r.f32();
  if (r.remaining() != 0) throw Error(Errc::BadFormat, path.string() + ": unexpected length");
  return stats;
}

LabeledSet to_labeled_set(const FeatureCache& cache) {
  LabeledSet set;
  set.features.resize(static_cast<Eigen::Index>(cache.entries.size()),
                      static_cast<Eigen::Index>(cache.n_mels) * cache.n_frames);
  for (std::size_t i = 0; i < cache.entries.size(); ++i) {
    const auto& e = cache.entries[i];
    set.features.row(static_cast<Eigen::Index>(i)) = flatten_patch(e.values);
    set.labels.push_back(e.class_index);
    set.paths.push_back(e.path);
  }
  return set;
}

}  // namespace timbre
