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
#include <string>
#include <utility>
#include <vector>

#include "stnface/tensor.hpp"

namespace stnface {

class FaceModel;
struct OptimizerState;

/// Named tensors in file order plus the iteration counter.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::uint64_t iter = 0;

  const Tensor* find(const std::string& name) const;
};

/// "STNCKPT1", then per tensor {u16 name_len, name, u8 rank, u32 dims...,
/// little-endian f32 payload}, then the footer {u16 9, "meta.iter", u64}.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Parameters (model order), the center bank as "recog.centers", then one
/// "<name>.momentum" chunk per parameter.
Checkpoint capture_checkpoint(FaceModel& model, const OptimizerState& opt);

/// Throws StateMismatch if any expected tensor is missing or has a
/// different shape, or if the file carries tensors the model lacks.
void restore_checkpoint(const Checkpoint& ckpt, FaceModel& model, OptimizerState& opt);

/// FNV-1a over every parameter's name, shape and bytes, for equality checks.
std::uint64_t parameter_hash(FaceModel& model);

}  // namespace stnface
