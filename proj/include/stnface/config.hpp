/* Copyright 2026 The stnface Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "stnface/data.hpp"
#include "stnface/model.hpp"
#include "stnface/training.hpp"

namespace stnface {

/// Every tunable of a run. Parsed from flat "key = value" text; see
/// config_keys() for the full list with defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  ModelConfig model;
  SolverConfig solver;
  double joint_start = 0.5;
  double recog_start = 0.8;
  BranchWeights wider{1.0, 1.0, 0.0};
  BranchWeights casia{0.0, 0.5, 1.0};
  SplitConfig split;
  NuisanceRanges nuisance;
  StitchLayout layout{3, 4, 250};
  int det_test_tiles = 100;
  double eval_iou = 0.5;

  std::uint64_t data_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t sampling_seed() const;

  StageSchedule schedule() const;
  SyntheticWorld world() const;
};

/// Keys in echo order.
std::vector<std::string> config_keys();

/// Applies "key = value" lines on top of `base`. '#' starts a comment.
/// Throws ConfigError naming the key for unknown keys or bad values.
RunConfig parse_config(std::istream& is, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Sets one key from its text form.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// Fully resolved configuration, one "key=value" per line.
void echo_config(std::ostream& os, const RunConfig& cfg);

/// Range checks across keys (share_depth, fractions, positive sizes).
void validate_config(const RunConfig& cfg);

}  // namespace stnface
