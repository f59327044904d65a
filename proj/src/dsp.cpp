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

#include "timbre/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <string>

#include "timbre/error.hpp"

namespace timbre {
namespace {

constexpr double kMinLogHz = 1000.0;
constexpr double kLinearHzPerMel = 200.0 / 3.0;
constexpr double kMinLogMel = kMinLogHz / kLinearHzPerMel;  // 15
const double kLogStep = std::log(6.4) / 27.0;

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

double decode_sample(const unsigned char* p, std::uint16_t format, int bits) {
  if (format == kFormatFloat) {
    if (bits == 32) {
      std::uint32_t u = read_u32(p);
      float f;
      std::memcpy(&f, &u, sizeof f);
      return f;
    }
    std::uint64_t u = std::uint64_t(read_u32(p)) | (std::uint64_t(read_u32(p + 4)) << 32);
    double d;
    std::memcpy(&d, &u, sizeof d);
    return d;
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) | (std::int32_t(p[2]) << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
  }
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

constexpr int kResampleTaps = 64;
constexpr int kHalfTaps = kResampleTaps / 2;
constexpr double kRolloff = 0.95;

// Taps for input offsets k = -31..32 at fractional phase `frac`, normalized to unit DC gain.
std::vector<double> sinc_kernel(double frac, double cutoff) {
  std::vector<double> taps(kResampleTaps);
  for (int j = 0; j < kResampleTaps; ++j) {
    const int k = j - (kHalfTaps - 1);
    const double t = frac - k;
    const double x = t / kHalfTaps;
    const double window =
        std::abs(x) >= 1.0
            ? 0.0
            : 0.42 + 0.5 * std::cos(std::numbers::pi * x) + 0.08 * std::cos(2.0 * std::numbers::pi * x);
    taps[j] = cutoff * sinc(cutoff * t) * window;
  }
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  if (total != 0.0)
    for (double& v : taps) v /= total;
  return taps;
}

}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMinLogHz) return hz / kLinearHzPerMel;
  return kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMinLogMel) return mel * kLinearHzPerMel;
  return kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

AudioClip decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(Errc::CorruptHeader, "missing RIFF/WAVE signature");
  }
  std::uint16_t format = 0;
  int channels = 0;
  std::uint32_t rate = 0;
  int bits = 0;
  int block_align = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || available < 16) throw Error(Errc::CorruptHeader, "short fmt chunk");
      const unsigned char* f = chunk + 8;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 26 || available < 26) throw Error(Errc::CorruptHeader, "short extensible fmt chunk");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      // Truncated files are common; keep what is actually there.
      data_size = std::min<std::size_t>(size, available);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw Error(Errc::CorruptHeader, "no fmt chunk");
  if (!data) throw Error(Errc::CorruptHeader, "no data chunk");
  if (channels <= 0 || rate == 0) throw Error(Errc::CorruptHeader, "zero channels or sample rate");

  const bool int_ok = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!int_ok && !float_ok) {
    throw Error(Errc::UnsupportedEncoding,
                "format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
  }
  const int bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) {
    throw Error(Errc::CorruptHeader, "block align does not match channels * sample size");
  }

  const std::size_t frames = data_size / static_cast<std::size_t>(block_align);
  if (frames == 0) throw Error(Errc::EmptyClip, "no audio frames");
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(static_cast<Eigen::Index>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* frame = data + i * block_align;
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) acc += decode_sample(frame + c * bytes_per_sample, format, bits);
    clip.samples(static_cast<Eigen::Index>(i)) = acc / channels;
  }
  return clip;
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  const bool pcm = encoding == WavEncoding::Pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size()) * (bits / 8);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, pcm ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i) {
    if (pcm) {
      const double s = std::clamp(clip.samples(i), -1.0, 32767.0 / 32768.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(s * 32768.0))));
    } else {
      const float f = static_cast<float>(clip.samples(i));
      std::uint32_t u;
      std::memcpy(&u, &f, sizeof u);
      put_u32(out, u);
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(Errc::Io, "cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(Errc::Io, "short write to " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0 || clip.sample_rate <= 0) {
    throw Error(Errc::InvalidRange, "sample rates must be positive");
  }
  if (target_rate == clip.sample_rate) return clip;

  const std::int64_t g = std::gcd<std::int64_t>(target_rate, clip.sample_rate);
  const std::int64_t up = target_rate / g;       // L
  const std::int64_t down = clip.sample_rate / g;  // M
  const double cutoff = std::min(1.0, double(up) / double(down)) * kRolloff;
  const std::int64_t n_in = clip.samples.size();
  const std::int64_t n_out = (n_in * up + down / 2) / down;

  // Kernels are tabulated per phase when the phase count is modest.
  const bool tabulate = up <= 4096;
  std::vector<std::vector<double>> bank(tabulate ? static_cast<std::size_t>(up) : 0);

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::int64_t n = 0; n < n_out; ++n) {
    const std::int64_t base = (n * down) / up;
    const std::int64_t phase = (n * down) % up;
    const double frac = double(phase) / double(up);
    std::vector<double> local;
    const std::vector<double>* taps;
    if (tabulate) {
      auto& slot = bank[static_cast<std::size_t>(phase)];
      if (slot.empty()) slot = sinc_kernel(frac, cutoff);
      taps = &slot;
    } else {
      local = sinc_kernel(frac, cutoff);
      taps = &local;
    }
    double acc = 0.0;
    for (int j = 0; j < kResampleTaps; ++j) {
      const std::int64_t i = base + j - (kHalfTaps - 1);
      if (i >= 0 && i < n_in) acc += (*taps)[j] * clip.samples(i);
    }
    out.samples(n) = acc;
  }
  return out;
}

Eigen::MatrixXd stft_magnitude(const AudioClip& clip, int window, int hop) {
  if (clip.samples.size() == 0) throw Error(Errc::EmptyClip, "cannot analyse an empty clip");
  if (window <= 0 || hop <= 0 || hop > window) {
    throw Error(Errc::InvalidRange, "need 0 < hop <= window");
  }
  Eigen::VectorXd signal = clip.samples;
  if (signal.size() < window) {
    signal.conservativeResize(window);
    signal.tail(window - clip.samples.size()).setZero();
  }
  const Eigen::Index frames = (signal.size() - window) / hop + 1;
  const Eigen::Index bins = window / 2 + 1;

  // Periodic Hann.
  std::vector<double> hann(window);
  for (int n = 0; n < window; ++n) hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buffer(window);
  std::vector<std::complex<double>> spectrum;
  Eigen::MatrixXd mag(bins, frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index start = t * hop;
    for (int n = 0; n < window; ++n) buffer[n] = signal(start + n) * hann[n];
    fft.fwd(spectrum, buffer);
    for (Eigen::Index k = 0; k < bins; ++k) mag(k, t) = std::abs(spectrum[static_cast<std::size_t>(k)]);
  }
  return mag;
}

MelFilterbank mel_filterbank(int n_mels, double fmin, double fmax, int sample_rate, int n_fft) {
  if (n_mels <= 0 || n_fft <= 0 || sample_rate <= 0 || !(fmin >= 0.0) || !(fmin < fmax) ||
      fmax > sample_rate / 2.0) {
    throw Error(Errc::InvalidRange, "need 0 <= fmin < fmax <= sample_rate/2");
  }
  const Eigen::Index bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(i) / double(n_mels + 1));
  }

  MelFilterbank fb;
  fb.fmin = fmin;
  fb.fmax = fmax;
  fb.sample_rate = sample_rate;
  fb.n_fft = n_fft;
  fb.weights = Eigen::MatrixXd::Zero(n_mels, bins);
  fb.center_hz.resize(n_mels);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    fb.center_hz(m) = mid;
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double f = double(k) * sample_rate / n_fft;
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      fb.weights(m, k) = std::max(0.0, std::min(rising, falling));
    }
    if (fb.weights.row(m).maxCoeff() <= 0.0) {
      throw Error(Errc::InvalidRange, "mel filter " + std::to_string(m) + " covers no FFT bin");
    }
  }
  return fb;
}

LogMelSpectrogram log_mel(const Eigen::MatrixXd& stft_mag, const MelFilterbank& fb, double frame_hop_s) {
  if (stft_mag.rows() != fb.weights.cols()) {
    throw Error(Errc::ShapeMismatch, "spectrogram has " + std::to_string(stft_mag.rows()) +
                                         " bins, filterbank expects " + std::to_string(fb.weights.cols()));
  }
  Eigen::MatrixXd values = ((fb.weights * stft_mag).array() + kLogEpsilon).log().matrix();
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (hi > lo) {
    values = (values.array() - lo) / (hi - lo);
  } else {
    values.setZero();
  }
  return {std::move(values), frame_hop_s};
}

LogMelPatch trim_and_crop(const LogMelSpectrogram& spec, double threshold, int frames) {
  if (frames <= 0 || spec.values.cols() == 0) throw Error(Errc::InvalidRange, "empty spectrogram or crop");
  Eigen::Index onset = -1;
  for (Eigen::Index t = 0; t < spec.values.cols(); ++t) {
    if (spec.values.col(t).maxCoeff() > threshold) {
      onset = t;
      break;
    }
  }
  if (onset < 0) throw Error(Errc::NoOnset, "no frame exceeds " + std::to_string(threshold));
  LogMelPatch patch;
  patch.onset_frame = static_cast<int>(onset);
  patch.values = Eigen::MatrixXd::Zero(spec.values.rows(), frames);
  const Eigen::Index take = std::min<Eigen::Index>(frames, spec.values.cols() - onset);
  patch.values.leftCols(take) = spec.values.middleCols(onset, take);
  return patch;
}

NormStats fit_norm_stats(std::span<const LogMelPatch> patches) {
  if (patches.empty()) throw Error(Errc::EmptyCollection, "no patches to fit statistics on");
  const Eigen::Index bins = patches.front().values.rows();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(bins);
  double count = 0.0;
  for (const auto& p : patches) {
    if (p.normalized) throw Error(Errc::AlreadyNormalized, "statistics need unnormalized patches");
    if (p.values.rows() != bins) throw Error(Errc::ShapeMismatch, "patches differ in bin count");
    sum += p.values.rowwise().sum();
    count += static_cast<double>(p.values.cols());
  }
  NormStats stats;
  stats.mean = sum / count;
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(bins);
  for (const auto& p : patches) sq += (p.values.colwise() - stats.mean).array().square().rowwise().sum().matrix();
  stats.std = (sq / count).array().sqrt().max(kStdFloor).matrix();
  return stats;
}

LogMelPatch normalize_patch(const LogMelPatch& patch, const NormStats& stats) {
  if (patch.normalized) throw Error(Errc::AlreadyNormalized, "patch is already normalized");
  if (patch.values.rows() != stats.mean.size()) throw Error(Errc::ShapeMismatch, "stats/patch bin count");
  LogMelPatch out = patch;
  out.values = ((patch.values.colwise() - stats.mean).array().colwise() / stats.std.array()).matrix();
  out.normalized = true;
  return out;
}

LogMelPatch denormalize_patch(const LogMelPatch& patch, const NormStats& stats) {
  if (patch.values.rows() != stats.mean.size()) throw Error(Errc::ShapeMismatch, "stats/patch bin count");
  LogMelPatch out = patch;
  out.values = ((patch.values.array().colwise() * stats.std.array()).matrix().colwise() + stats.mean);
  out.normalized = false;
  return out;
}

LogMelPatch extract_patch(const AudioClip& clip, const DspParams& params) {
  const AudioClip input = resample(clip, params.sample_rate);
  const Eigen::MatrixXd mag = stft_magnitude(input, params.window, params.hop);
  const MelFilterbank fb =
      mel_filterbank(params.n_mels, params.fmin, params.fmax, params.sample_rate, params.window);
  const LogMelSpectrogram spec = log_mel(mag, fb, double(params.hop) / params.sample_rate);
  return trim_and_crop(spec, params.onset_threshold, params.frames);
}

LogMelPatch extract_patch(const std::filesystem::path& wav, const DspParams& params) {
  return extract_patch(load_wav(wav), params);
}

}  // namespace timbre
