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

// Generated corpora of band-limited tones in noise. Class k draws its partials
// from the k-th of `classes` log-spaced frequency bands, so classes are
// separable from the spectrum alone while pitch varies within each class.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "timbre/dsp.hpp"
#include "timbre/feature_cache.hpp"
#include "timbre/rng.hpp"

namespace timbre {

struct SyntheticSpec {
  int classes = 5;
  int sample_rate = 22050;
  double duration_s = 0.75;
  double max_lead_silence_s = 0.1;
  double noise = 0.02;
  double band_lo_hz = 100.0;
  double band_hi_hz = 6000.0;
  int partials = 3;
};

struct SyntheticClip {
  int class_index = 0;
  std::string name;  // "<class-name>_<n>_synthetic.wav"
  AudioClip clip;
};

AudioClip synth_clip(int class_index, const SyntheticSpec& spec, Rng& rng);

/// `per_class` clips for every class, interleaved by class.
std::vector<SyntheticClip> synth_corpus(const SyntheticSpec& spec, int per_class, std::uint64_t seed);

/// Writes the corpus as 16-bit WAV files under `dir`; returns the file count.
int write_synth_corpus(const std::filesystem::path& dir, const SyntheticSpec& spec, int per_class,
                       std::uint64_t seed);

/// Runs every clip through the front-end; clips without an onset are dropped.
std::vector<std::pair<int, LogMelPatch>> synth_patches(const std::vector<SyntheticClip>& clips,
                                                       const DspParams& params = {});

/// Normalizes patches with the given statistics and packs them as model rows.
LabeledSet to_labeled_set(const std::vector<std::pair<int, LogMelPatch>>& patches, const NormStats& stats);

}  // namespace timbre
