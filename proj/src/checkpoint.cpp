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

#include "timbre/checkpoint.hpp"

#include <json.hpp>

#include "binary_io.hpp"

namespace timbre {

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["kind"] = ckpt.spec.kind == ModelKind::FreqAttention ? "attention" : "fc";
  header["heads"] = ckpt.spec.heads;
  header["n_classes"] = ckpt.spec.n_classes;
  header["n_mels"] = ckpt.spec.n_mels;
  header["n_frames"] = ckpt.spec.n_frames;
  header["seed"] = ckpt.seed;
  header["epoch"] = ckpt.epoch;
  auto tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& e : ckpt.params) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(e.value.size()) * 4;
    tensors.push_back({{"name", e.name}, {"shape", {e.value.rows(), e.value.cols()}}, {"offset", offset},
                       {"bytes", bytes}});
    offset += bytes;
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  bin::Writer w;
  w.bytes("TMBC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& e : ckpt.params)
    for (Eigen::Index r = 0; r < e.value.rows(); ++r)
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) w.f32(e.value(r, c));
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto r = bin::Reader::open(path, Errc::MissingCheckpoint);
  r.expect_magic("TMBC");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(Errc::BadFormat, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadFormat, path.string() + ": header: " + e.what());
  }

  Checkpoint ckpt;
  try {
    const std::string kind = header.at("kind");
    if (kind != "attention" && kind != "fc") throw Error(Errc::BadFormat, "unknown model kind " + kind);
    ckpt.spec.kind = kind == "attention" ? ModelKind::FreqAttention : ModelKind::FreqFC;
    ckpt.spec.heads = header.at("heads");
    ckpt.spec.n_classes = header.at("n_classes");
    ckpt.spec.n_mels = header.at("n_mels");
    ckpt.spec.n_frames = header.at("n_frames");
    ckpt.seed = header.at("seed");
    ckpt.epoch = header.at("epoch");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadFormat, path.string() + ": header: " + e.what());
  }

  // The architecture defines which tensors must be present and their shapes.
  Rng unused(0);
  const ParamSet<float> expected = build<float>(ckpt.spec, unused);
  const auto& entries = header.at("tensors");
  if (entries.size() != expected.size()) {
    throw Error(Errc::ShapeMismatch, path.string() + ": " + std::to_string(entries.size()) +
                                         " tensors, architecture has " + std::to_string(expected.size()));
  }
  const std::size_t blob_start = r.position();
  std::uint64_t next = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& entry = entries[i];
    const std::string name = entry.at("name");
    const Eigen::Index rows = entry.at("shape").at(0), cols = entry.at("shape").at(1);
    const std::uint64_t offset = entry.at("offset");
    const auto& want = expected[i];
    if (name != want.name || rows != want.value.rows() || cols != want.value.cols()) {
      throw Error(Errc::ShapeMismatch, path.string() + ": tensor " + name + " does not match " + want.name);
    }
    if (offset != next || r.position() - blob_start != offset) {
      throw Error(Errc::BadFormat, path.string() + ": tensor " + name + " at unexpected offset");
    }
    Matrix<float> m(rows, cols);
    for (Eigen::Index rr = 0; rr < rows; ++rr)
      for (Eigen::Index cc = 0; cc < cols; ++cc) m(rr, cc) = r.f32();
    next = offset + static_cast<std::uint64_t>(rows * cols) * 4;
    ckpt.params.add(name, std::move(m));
  }
  if (r.remaining() != 0) throw Error(Errc::BadFormat, path.string() + ": trailing bytes");
  if (ckpt.params.count() != expected.count()) throw Error(Errc::ShapeMismatch, "parameter count mismatch");
  return ckpt;
}

}  // namespace timbre
