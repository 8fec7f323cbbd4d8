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

// Spatial transformer primitives: affine sampling grid, bilinear sampler and
// their analytic gradients.
//
// Coordinate convention: the target lattice spans the normalized square
// [-1,1]x[-1,1] (corners at +-1; a single row/column sits at 0). Theta maps
// target to normalized source coordinates, which are then mapped to 0-based
// source pixels by x_pix = (x_norm + 1) / 2 * (W - 1).

#include <array>
#include <span>
#include <vector>

#include "stnface/tensor.hpp"

namespace stnface {

/// Row-major 2x3 affine transform [t11 t12 t13; t21 t22 t23].
struct AffineTheta {
  std::array<float, 6> params{1.f, 0.f, 0.f, 0.f, 1.f, 0.f};

  static AffineTheta identity() { return {}; }
  /// Rotation by alpha (radians) plus translation in normalized units.
  static AffineTheta from_rotation(double alpha, double t1, double t2);

  bool operator==(const AffineTheta&) const = default;
};

/// Stacks per-region thetas into a [R,6] tensor.
template <typename T>
BasicTensor<T> theta_tensor(std::span<const AffineTheta> thetas);

struct Size2 {
  int h = 1;
  int w = 1;
  bool operator==(const Size2&) const = default;
};

template <typename T>
struct BasicSampleGrid {
  BasicTensor<T> source_coords;  // [R, Ho, Wo, 2], (x_s, y_s) in source pixels
  Size2 out_size;
  Size2 src_size;

  int regions() const { return source_coords.dim(0); }
};

using SampleGrid = BasicSampleGrid<float>;

template <typename T>
struct SamplerGrads {
  BasicTensor<T> grad_U;       // same shape as U
  BasicTensor<T> grad_coords;  // same shape as grid.source_coords
};

/// theta: [R,6]. Identity theta with out_size == src_size yields the exact
/// integer lattice.
template <typename T>
BasicSampleGrid<T> affine_grid(const BasicTensor<T>& theta, Size2 out_size,
                               Size2 src_size);

SampleGrid affine_grid(std::span<const AffineTheta> thetas, Size2 out_size,
                       Size2 src_size);

/// V[r,c,i] = sum_h sum_w U[r,c,h,w] k(x_s - w) k(y_s - h), k(d) = max(0,1-|d|).
/// Visits only the <=4 taps with nonzero weight, in the same order as the full
/// double sum. Parallel over regions.
template <typename T>
BasicTensor<T> bilinear_sample_forward(const BasicTensor<T>& U,
                                       const BasicSampleGrid<T>& grid);

/// grad_U by scattering kernel weights; grad_coords with the piecewise
/// derivative: +1 for x_s <= w < x_s + 1, -1 for x_s - 1 < w < x_s, else 0
/// (same for y). Parallel over regions.
template <typename T>
SamplerGrads<T> bilinear_sample_backward(const BasicTensor<T>& grad_V,
                                         const BasicTensor<T>& U,
                                         const BasicSampleGrid<T>& grid);

/// Chain rule from source-pixel coordinate gradients to theta. Returns [R,6].
template <typename T>
BasicTensor<T> theta_backward(const BasicTensor<T>& grad_coords, Size2 out_size,
                              Size2 src_size);

/// Sign of d k(x - w)/dx for the sampling kernel, with the half-open interval
/// convention above.
template <typename T>
inline T kernel_slope(T w, T x) {
  if (x <= w && w < x + T(1)) return T(1);
  if (x - T(1) < w && w < x) return T(-1);
  return T(0);
}

template <typename T>
inline T kernel_weight(T d) {
  const T a = d < T(0) ? -d : d;
  return a < T(1) ? T(1) - a : T(0);
}

}  // namespace stnface
