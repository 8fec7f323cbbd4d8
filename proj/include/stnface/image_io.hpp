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

#include <filesystem>

#include "stnface/tensor.hpp"

namespace stnface {

/// Binary PPM (P6) or PGM (P5), maxval <= 255, into [3,H,W] floats v/maxval.
/// Greyscale is replicated to three channels. Throws InputError.
Tensor read_pnm(const std::filesystem::path& path);

/// Writes [3,H,W] (or [1,3,H,W]) as P6, rounding clamp(v,0,1)*255.
void write_ppm(const std::filesystem::path& path, const Tensor& image);

}  // namespace stnface
