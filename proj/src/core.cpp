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

#include "timbre/error.hpp"

#include <cmath>
#include <numbers>

#include "timbre/model.hpp"
#include "timbre/rng.hpp"

namespace timbre {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::FileNotFound: return "FileNotFound";
    case Errc::UnsupportedEncoding: return "UnsupportedEncoding";
    case Errc::CorruptHeader: return "CorruptHeader";
    case Errc::EmptyClip: return "EmptyClip";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NoOnset: return "NoOnset";
    case Errc::EmptyCollection: return "EmptyCollection";
    case Errc::AlreadyNormalized: return "AlreadyNormalized";
    case Errc::InvalidHeadCount: return "InvalidHeadCount";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::WrongModelKind: return "WrongModelKind";
    case Errc::MalformedName: return "MalformedName";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::EmptyCache: return "EmptyCache";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::ZeroTotalSupport: return "ZeroTotalSupport";
    case Errc::Io: return "Io";
    case Errc::BadFormat: return "BadFormat";
    case Errc::MissingCache: return "MissingCache";
    case Errc::MissingCheckpoint: return "MissingCheckpoint";
    case Errc::UnknownSample: return "UnknownSample";
  }
  return "Unknown";
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::below(std::size_t n) {
  if (n <= 1) return 0;
  const std::uint64_t bound = n;
  const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % bound);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % bound);
}

std::string ModelSpec::tag() const {
  return kind == ModelKind::FreqAttention ? "attention-h" + std::to_string(heads) : "fc";
}

std::string ModelSpec::label() const {
  return kind == ModelKind::FreqAttention ? "Freq. Attention (h=" + std::to_string(heads) + ")"
                                          : "Freq. FC";
}

void ModelSpec::validate() const {
  if (n_classes <= 0 || n_mels <= 0 || n_frames <= 0) throw Error(Errc::ShapeMismatch, "non-positive model dims");
  if (kind == ModelKind::FreqAttention && (heads <= 0 || n_mels % heads != 0)) {
    throw Error(Errc::InvalidHeadCount,
                std::to_string(heads) + " heads do not divide embedding size " + std::to_string(n_mels));
  }
}

}  // namespace timbre
