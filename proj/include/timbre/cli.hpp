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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "timbre/dsp.hpp"
#include "timbre/model.hpp"
#include "timbre/trainer.hpp"

namespace timbre {

/// Everything a command needs. Defaults are the full-scale training settings.
struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path work_dir;
  std::filesystem::path aliases;
  DspParams dsp;
  TrainConfig train;
  ModelSpec model = ModelSpec::attention(8);
  std::uint64_t seed = 42;  // split and initialisation
  int jobs = 1;
};

/// Overlays a JSON config document onto `base`. Unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Work-dir layout.
struct WorkLayout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.tsv"; }
  std::filesystem::path cache_dir() const { return root / "cache"; }
  std::filesystem::path checkpoint(const ModelSpec& spec) const {
    return root / "checkpoints" / (spec.tag() + ".tmbc");
  }
  std::filesystem::path train_log(const ModelSpec& spec) const { return root / "logs" / (spec.tag() + ".csv"); }
  std::filesystem::path report(const ModelSpec& spec) const { return root / "reports" / (spec.tag() + ".json"); }
  std::filesystem::path confusion(const ModelSpec& spec) const {
    return root / "reports" / (spec.tag() + ".confusion.csv");
  }
  std::filesystem::path ablation() const { return root / "reports" / "ablation.csv"; }
  std::filesystem::path attention_dir() const { return root / "attention"; }
};

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Entry point of the `timbre` executable. Reads TIMBRE_WORK_DIR from the environment.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace timbre
