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
#include <set>
#include <string>
#include <vector>

#include "timbre/dataset.hpp"
#include "timbre/feature_cache.hpp"
#include "timbre/synthetic.hpp"

namespace timbre {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<SampleRecord> records_for(int cls, int n, const std::string& prefix) {
  std::vector<SampleRecord> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({prefix + "/" + std::string(ClassTable::name(cls)) + "_" + std::to_string(i) + "_x.wav",
                   std::string(ClassTable::name(cls)), cls, Split::Train});
  }
  return out;
}

TEST(LabelTest, LeadingToken) {
  EXPECT_EQ(parse_label("violin_G6_1_fortissimo_arco-normal.mp3"), "violin");
  EXPECT_EQ(parse_label("viola_G6_1_fortissimo_arco-normal.mp3"), "viola");
  EXPECT_EQ(parse_label("agogo-bells_x_x_x.wav"), "agogo-bells");
  EXPECT_EQ(parse_label("Double Bass_A1_025.wav"), "double bass");
  EXPECT_THROW(parse_label("_A1.wav"), Error);
  EXPECT_THROW(parse_label(""), Error);
}

TEST(LabelTest, ClassLookup) {
  const auto table = ClassTable::standard();
  EXPECT_EQ(map_class("tuba", table), 18);
  EXPECT_EQ(map_class("snare-drum", table), 19);
  EXPECT_EQ(map_class("saxophone", table), 9);
  EXPECT_EQ(map_class("violin", table), 0);
  EXPECT_EQ(map_class("double bass", table), 3);
  EXPECT_EQ(map_class("cor-anglais", table), 14);
  EXPECT_EQ(map_class("CONTRABASSOON", table), 13);
  EXPECT_EQ(map_class("agogo-bells", table), kChromaticPercussion);
  for (int i = 0; i < kNumClasses; ++i) EXPECT_EQ(map_class(ClassTable::name(i), table), i);
}

TEST(LabelTest, AliasFile) {
  TempDir dir("timbre_alias_test");
  const auto path = dir.path() / "aliases.txt";
  std::ofstream(path) << "# comment\nfiddle\tviolin\n\nbig fiddle   double-bass\n";
  auto table = ClassTable::standard();
  table.load_aliases(path);
  EXPECT_EQ(table.index_of("fiddle"), 0);
  EXPECT_EQ(table.index_of("big-fiddle"), 3);
  std::ofstream(path) << "kazoo not-a-class\n";
  EXPECT_THROW(table.load_aliases(path), Error);
}

TEST(LabelTest, ShippedAliasFileLoads) {
  auto table = ClassTable::standard();
  table.load_aliases(fs::path(TIMBRE_TEST_DATA_DIR) / ".." / ".." / "data" / "instrument_aliases.txt");
  EXPECT_EQ(table.index_of("cor anglais"), 14);
  EXPECT_EQ(table.index_of("Tenor_Saxophone"), 9);
  EXPECT_EQ(table.index_of("acoustic guitar"), 4);
}

TEST(SplitTest, ProportionalCut) {
  const auto plan = make_split(records_for(0, 10, "a"), {}, 42);
  const auto h = plan.histogram();
  EXPECT_EQ(h[0][0], 7);
  EXPECT_EQ(h[0][1], 1);
  EXPECT_EQ(h[0][2], 2);
  EXPECT_EQ(parse_split(split_name(Split::Val)), Split::Val);
}

TEST(SplitTest, DeterministicPartitionAndStratified) {
  std::vector<SampleRecord> all;
  const int sizes[] = {10, 37, 4, 101, 1, 55};
  for (int c = 0; c < 6; ++c) {
    auto r = records_for(c * 3, sizes[c], "d" + std::to_string(c));
    all.insert(all.end(), r.begin(), r.end());
  }
  const auto a = make_split(all, {}, 7);
  const auto b = make_split(all, {}, 7);
  const auto c = make_split(all, {}, 8);
  EXPECT_EQ(a.records, b.records);
  EXPECT_NE(a.records, c.records);

  std::set<std::string> seen;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    for (const auto& r : a.select(s)) EXPECT_TRUE(seen.insert(r.path).second);
  }
  EXPECT_EQ(seen.size(), all.size());
  EXPECT_TRUE(std::is_sorted(a.records.begin(), a.records.end(),
                             [](const auto& x, const auto& y) { return x.path < y.path; }));

  const auto h = a.histogram();
  for (int c = 0; c < 6; ++c) {
    const int n = sizes[c];
    EXPECT_LE(std::abs(h[c * 3][0] - 0.7 * n), 1.0) << c;
    EXPECT_LE(std::abs(h[c * 3][1] - 0.1 * n), 1.0) << c;
    EXPECT_LE(std::abs(h[c * 3][2] - 0.2 * n), 1.0) << c;
  }
}

TEST(ManifestTest, RoundTrip) {
  TempDir dir("timbre_manifest_test");
  auto records = records_for(5, 12, "x");
  auto more = records_for(19, 3, "y");
  records.insert(records.end(), more.begin(), more.end());
  const auto plan = make_split(records, {}, 3);
  write_manifest(dir.path() / "manifest.tsv", plan);
  const auto back = read_manifest(dir.path() / "manifest.tsv");
  EXPECT_EQ(back.records, plan.records);
}

TEST(ScanTest, SyntheticCorpus) {
  TempDir dir("timbre_scan_test");
  SyntheticSpec spec;
  spec.classes = 3;
  EXPECT_EQ(write_synth_corpus(dir.path(), spec, 1, 5), 3);
  std::ofstream(dir.path() / "readme.txt") << "not audio";
  const auto scan = scan_corpus(dir.path(), ClassTable::standard());
  ASSERT_EQ(scan.records.size(), 3u);
  std::set<int> classes;
  for (const auto& r : scan.records) classes.insert(r.class_index);
  EXPECT_EQ(classes, (std::set<int>{0, 1, 2}));

  TempDir empty("timbre_scan_empty");
  try {
    scan_corpus(empty.path(), ClassTable::standard());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyDataset);
  }
  EXPECT_THROW(scan_corpus(empty.path() / "missing", ClassTable::standard()), Error);
}

TEST(FeatureCacheTest, EmptyCacheHasValidHeader) {
  TempDir dir("timbre_cache_empty");
  write_feature_cache(dir.path() / "val.tmbf", FeatureCache{});
  const auto back = read_feature_cache(dir.path() / "val.tmbf");
  EXPECT_EQ(back.n_mels, 128);
  EXPECT_EQ(back.n_frames, 22);
  EXPECT_TRUE(back.entries.empty());
  EXPECT_EQ(to_labeled_set(back).size(), 0);
  try {
    read_feature_cache(dir.path() / "absent.tmbf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingCache);
  }
}

TEST(FeatureCacheTest, BuildAndReplaySyntheticWavs) {
  TempDir dir("timbre_cache_build");
  SyntheticSpec spec;
  spec.classes = 3;
  write_synth_corpus(dir.path() / "corpus", spec, 4, 9);
  const auto scan = scan_corpus(dir.path() / "corpus", ClassTable::standard());
  const auto plan = make_split(scan.records, {}, 42);
  const auto summary = build_cache(plan, dir.path() / "corpus", {}, dir.path() / "cache", 2);
  EXPECT_TRUE(summary.skipped.empty());
  EXPECT_EQ(summary.written[0] + summary.written[1] + summary.written[2], 12);

  const auto paths = CachePaths::in(dir.path() / "cache");
  const auto stats = read_norm_stats(paths.stats);
  const auto train = read_feature_cache(paths.train);
  ASSERT_EQ(static_cast<int>(train.entries.size()), summary.written[0]);

  // Replay against a fresh extraction; the stored stats are f32.
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    for (const auto& e : read_feature_cache(paths.of(s)).entries) {
      const auto patch = normalize_patch(extract_patch(dir.path() / "corpus" / e.path), stats);
      EXPECT_LT((e.values - patch.values.cast<float>()).cwiseAbs().maxCoeff(), 1e-5f) << e.path;
    }
  }

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(128);
  for (const auto& e : train.entries) sum += e.values.cast<double>().rowwise().sum();
  const Eigen::VectorXd mean = sum / double(train.entries.size() * 22);
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-5);

  write_feature_cache(dir.path() / "copy.tmbf", train);
  const auto copy = read_feature_cache(dir.path() / "copy.tmbf");
  ASSERT_EQ(copy.entries.size(), train.entries.size());
  for (std::size_t i = 0; i < copy.entries.size(); ++i) EXPECT_TRUE(copy.entries[i] == train.entries[i]);

  const auto set = to_labeled_set(train);
  ASSERT_EQ(set.size(), summary.written[0]);
  EXPECT_EQ(set.features(0, 5 * 22 + 3), train.entries[0].values(5, 3));
}

TEST(FeatureCacheTest, RebuildIsByteIdenticalAcrossThreadCounts) {
  TempDir dir("timbre_cache_rebuild");
  SyntheticSpec spec;
  spec.classes = 2;
  write_synth_corpus(dir.path() / "corpus", spec, 5, 1);
  const auto plan = make_split(scan_corpus(dir.path() / "corpus", ClassTable::standard()).records, {}, 42);
  build_cache(plan, dir.path() / "corpus", {}, dir.path() / "a", 1);
  build_cache(plan, dir.path() / "corpus", {}, dir.path() / "b", 3);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const char* name : {"train.tmbf", "val.tmbf", "test.tmbf", "norm.tmbs"}) {
    EXPECT_EQ(slurp(dir.path() / "a" / name), slurp(dir.path() / "b" / name)) << name;
  }
}

TEST(FeatureCacheTest, TruncatedCacheIsRejected) {
  TempDir dir("timbre_cache_truncated");
  FeatureCache cache;
  cache.entries.push_back({2, "x.wav", Eigen::MatrixXf::Ones(128, 22)});
  write_feature_cache(dir.path() / "t.tmbf", cache);
  fs::resize_file(dir.path() / "t.tmbf", fs::file_size(dir.path() / "t.tmbf") - 8);
  EXPECT_THROW(read_feature_cache(dir.path() / "t.tmbf"), Error);
}

}  // namespace
}  // namespace timbre
