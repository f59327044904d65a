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

// Checkpoint file: "TMBC", u32 version (1), u32 header byte length, a UTF-8
// JSON header, then raw little-endian f32 tensor blobs (row-major). The header
// records the model spec, seed, epoch and, for each tensor, its name, shape
// and byte offset relative to the start of the blob section.

#include <cstdint>
#include <filesystem>

#include "timbre/model.hpp"

namespace timbre {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  ParamSet<float> params;
  std::uint64_t seed = 0;
  int epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws MissingCheckpoint, BadFormat, or ShapeMismatch when the stored
/// tensors do not match what the spec's architecture requires.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace timbre
