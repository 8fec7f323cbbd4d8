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

// Serial reference kernels. Direct loops with the same accumulation order as
// the parallel kernels in ops.hpp / stn.hpp, so results are bit-identical.
// Kept for tests and the kernel benchmark.

#include "stnface/ops.hpp"
#include "stnface/stn.hpp"

namespace stnface::reference {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input,
                              const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias, int stride, int pad);

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& grad_out,
                               const BasicTensor<T>& input,
                               const BasicTensor<T>& weight, int stride,
                               int pad);

template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input,
                          const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias);

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& grad_out,
                       const BasicTensor<T>& input,
                       const BasicTensor<T>& weight);

template <typename T>
BasicTensor<T> bilinear_sample_forward(const BasicTensor<T>& U,
                                       const BasicSampleGrid<T>& grid);

template <typename T>
SamplerGrads<T> bilinear_sample_backward(const BasicTensor<T>& grad_V,
                                         const BasicTensor<T>& U,
                                         const BasicSampleGrid<T>& grid);

}  // namespace stnface::reference
