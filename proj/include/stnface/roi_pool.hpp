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
#include <span>
#include <vector>

#include "stnface/boxes.hpp"
#include "stnface/stn.hpp"
#include "stnface/tensor.hpp"

namespace stnface {

template <typename T>
struct RoiPoolResult {
  BasicTensor<T> output;              // [R, C, out.h, out.w]
  std::vector<std::int64_t> argmax;   // flat feature index per output cell, -1 if empty
};

/// Integer feature-cell footprint [x0,x1) x [y0,y1) of a pixel box:
/// floor(x1*scale) .. ceil(x2*scale), clamped to the map and never narrower
/// than one cell.
struct CellRange {
  int x0, x1, y0, y1;
};
CellRange roi_footprint(const BBox& box, double spatial_scale, int feat_h, int feat_w);

/// Max-pools each box's footprint on feat [1,C,H,W] into an out.h x out.w
/// partition. Bin i along an axis of n cells covers
/// [floor(i*n/out), ceil((i+1)*n/out)).
template <typename T>
RoiPoolResult<T> roi_pool_forward(const BasicTensor<T>& feat,
                                  std::span<const BBox> boxes,
                                  double spatial_scale, Size2 out);

template <typename T>
BasicTensor<T> roi_pool_backward(const BasicTensor<T>& grad_out,
                                 std::span<const std::int64_t> argmax,
                                 const Shape& feat_shape);

}  // namespace stnface
