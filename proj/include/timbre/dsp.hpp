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

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <vector>

#include "timbre/error.hpp"

namespace timbre {

/// Mono waveform. Samples are nominally in [-1, 1].
struct AudioClip {
  Eigen::VectorXd samples;
  int sample_rate = 0;

  double duration() const { return sample_rate > 0 ? samples.size() / double(sample_rate) : 0.0; }
};

/// Front-end settings. Defaults are the model's input contract.
struct DspParams {
  int sample_rate = 22050;
  int window = 1024;  // 50% overlap with the hop
  int hop = 512;
  int n_mels = 128;
  double fmin = 32.7;
  double fmax = 8000.0;
  double onset_threshold = 0.1;
  int frames = 22;
};

struct MelFilterbank {
  Eigen::MatrixXd weights;    // [n_mels x n_fft/2+1], unit-peak triangles
  Eigen::VectorXd center_hz;  // [n_mels]
  double fmin = 0.0;
  double fmax = 0.0;
  int sample_rate = 0;
  int n_fft = 0;
};

struct LogMelSpectrogram {
  Eigen::MatrixXd values;  // [n_mels x T], scaled to [0, 1]
  double frame_hop_s = 0.0;
};

struct LogMelPatch {
  Eigen::MatrixXd values;  // [n_mels x frames]
  int onset_frame = 0;
  bool normalized = false;
};

struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

inline constexpr double kLogEpsilon = 1e-10;
inline constexpr double kStdFloor = 1e-8;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Decodes 8/16/24/32-bit integer or 32/64-bit float PCM WAV, averaging channels.
AudioClip load_wav(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const unsigned char> bytes);

enum class WavEncoding { Pcm16, Float32 };
void write_wav(const std::filesystem::path& path, const AudioClip& clip,
               WavEncoding encoding = WavEncoding::Pcm16);

/// Windowed-sinc polyphase resampler (64 taps, Blackman window).
AudioClip resample(const AudioClip& clip, int target_rate);

/// Hann-windowed STFT magnitudes, [window/2+1 x T] with
/// T = floor((len - window) / hop) + 1. Clips shorter than one window are
/// zero-padded to it. No centering.
Eigen::MatrixXd stft_magnitude(const AudioClip& clip, int window, int hop);

MelFilterbank mel_filterbank(int n_mels, double fmin, double fmax, int sample_rate, int n_fft);

/// Per-clip min-max scaled log(fb * mag + 1e-10). A constant input maps to zeros.
LogMelSpectrogram log_mel(const Eigen::MatrixXd& stft_mag, const MelFilterbank& fb, double frame_hop_s = 0.0);

/// Onset = first frame whose maximum bin exceeds `threshold`; the patch is
/// the next `frames` columns, zero-padded past the end. Throws NoOnset.
LogMelPatch trim_and_crop(const LogMelSpectrogram& spec, double threshold, int frames);

NormStats fit_norm_stats(std::span<const LogMelPatch> patches);
LogMelPatch normalize_patch(const LogMelPatch& patch, const NormStats& stats);
LogMelPatch denormalize_patch(const LogMelPatch& patch, const NormStats& stats);

/// clip -> resample -> STFT -> log-mel -> onset crop (unnormalized).
LogMelPatch extract_patch(const AudioClip& clip, const DspParams& params = {});
LogMelPatch extract_patch(const std::filesystem::path& wav, const DspParams& params = {});

}  // namespace timbre
