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

#include "timbre/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "timbre/dataset.hpp"
#include "timbre/model.hpp"

namespace timbre {

AudioClip synth_clip(int class_index, const SyntheticSpec& spec, Rng& rng) {
  const double log_lo = std::log(spec.band_lo_hz);
  const double band = (std::log(spec.band_hi_hz) - log_lo) / spec.classes;
  const double band_lo = std::exp(log_lo + band * class_index);
  const double band_hi = std::exp(log_lo + band * (class_index + 1));

  const auto n = static_cast<Eigen::Index>(spec.duration_s * spec.sample_rate);
  const auto lead = static_cast<Eigen::Index>(rng.uniform(0.0, spec.max_lead_silence_s) * spec.sample_rate);
  std::vector<double> freqs, amps, phases;
  for (int p = 0; p < spec.partials; ++p) {
    freqs.push_back(std::exp(rng.uniform(std::log(band_lo), std::log(band_hi))));
    amps.push_back(rng.uniform(0.3, 1.0));
    phases.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
  }
  const double norm = 0.5 / spec.partials;

  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.resize(n);
  const double attack = 0.01 * spec.sample_rate;
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = spec.noise * 0.1 * rng.normal();
    if (i >= lead) {
      const double t = double(i - lead) / spec.sample_rate;
      const double env = std::min(1.0, double(i - lead) / attack) * std::exp(-1.5 * t);
      double tone = 0.0;
      for (int p = 0; p < spec.partials; ++p) {
        tone += amps[p] * std::sin(2.0 * std::numbers::pi * freqs[p] * t + phases[p]);
      }
      s += env * norm * tone + spec.noise * rng.normal();
    }
    clip.samples(i) = std::clamp(s, -1.0, 1.0);
  }
  return clip;
}

std::vector<SyntheticClip> synth_corpus(const SyntheticSpec& spec, int per_class, std::uint64_t seed) {
  if (spec.classes < 1 || spec.classes > kNumClasses) throw Error(Errc::InvalidRange, "synthetic class count");
  Rng rng(seed);
  std::vector<SyntheticClip> out;
  for (int k = 0; k < per_class; ++k) {
    for (int c = 0; c < spec.classes; ++c) {
      SyntheticClip item;
      item.class_index = c;
      item.name = std::string(kClassNames[static_cast<std::size_t>(c)]) + "_" + std::to_string(k) + "_synthetic.wav";
      item.clip = synth_clip(c, spec, rng);
      out.push_back(std::move(item));
    }
  }
  return out;
}

int write_synth_corpus(const std::filesystem::path& dir, const SyntheticSpec& spec, int per_class,
                       std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const auto clips = synth_corpus(spec, per_class, seed);
  for (const auto& c : clips) write_wav(dir / c.name, c.clip);
  return static_cast<int>(clips.size());
}

std::vector<std::pair<int, LogMelPatch>> synth_patches(const std::vector<SyntheticClip>& clips,
                                                       const DspParams& params) {
  std::vector<std::pair<int, LogMelPatch>> out;
  for (const auto& c : clips) {
    try {
      out.emplace_back(c.class_index, extract_patch(c.clip, params));
    } catch (const Error& e) {
      if (e.code() != Errc::NoOnset) throw;
    }
  }
  return out;
}

LabeledSet to_labeled_set(const std::vector<std::pair<int, LogMelPatch>>& patches, const NormStats& stats) {
  LabeledSet set;
  if (patches.empty()) return set;
  const auto& first = patches.front().second.values;
  set.features.resize(static_cast<Eigen::Index>(patches.size()), first.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const LogMelPatch p = patches[i].second.normalized ? patches[i].second : normalize_patch(patches[i].second, stats);
    set.features.row(static_cast<Eigen::Index>(i)) = flatten_patch(p.values.cast<float>());
    set.labels.push_back(patches[i].first);
    set.paths.push_back("synthetic/" + std::to_string(i));
  }
  return set;
}

}  // namespace timbre
