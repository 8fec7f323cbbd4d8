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

// Layer kernels with hand-derived backward passes. Every function is a pure
// function of its arguments. Kernels marked "parallel" split work across
// OpenMP threads along an axis whose results are independent, so output is
// bit-identical to the serial reference in stnface/reference.hpp.

#include <cstdint>
#include <span>
#include <vector>

#include "stnface/tensor.hpp"

namespace stnface {

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input;  // empty when not requested
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Cross-correlation (no kernel flip). input [N,C,H,W], weight [K,C,kh,kw],
/// bias [K]. Parallel over N.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input,
                              const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias, int stride, int pad);

/// Parallel over N for grad_input and over K for grad_weight.
template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& grad_out,
                               const BasicTensor<T>& input,
                               const BasicTensor<T>& weight, int stride,
                               int pad, bool need_input_grad = true);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  std::vector<std::int64_t> argmax;  // flat input index per output cell
};

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, int k, int stride);

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_out,
                                  std::span<const std::int64_t> argmax,
                                  const Shape& input_shape);

template <typename T>
struct FcGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

/// output[N,M] = input[N,D] * weight[D,M] + bias[M].
template <typename T>
BasicTensor<T> fc_forward(const BasicTensor<T>& input,
                          const BasicTensor<T>& weight,
                          const BasicTensor<T>& bias);

template <typename T>
FcGrads<T> fc_backward(const BasicTensor<T>& grad_out,
                       const BasicTensor<T>& input,
                       const BasicTensor<T>& weight,
                       bool need_input_grad = true);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

// Gradient is passed where x > 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_out,
                             const BasicTensor<T>& x);

/// Global average pool [N,C,H,W] -> [N,C].
template <typename T>
BasicTensor<T> avgpool_global_forward(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> avgpool_global_backward(const BasicTensor<T>& grad_out,
                                       const Shape& input_shape);

/// Row-wise softmax of logits [N,M].
template <typename T>
BasicTensor<T> softmax_forward(const BasicTensor<T>& logits);

template <typename T>
struct LossResult {
  T loss = T(0);
  BasicTensor<T> grad;
};

/// Mean negative log-likelihood of labels under softmax(logits).
/// grad = (probs - onehot) / N. Throws IndexError on a label outside [0,M).
template <typename T>
LossResult<T> softmax_xent_loss(const BasicTensor<T>& logits,
                                std::span<const int> labels);

enum class RegressionLoss { kL2, kSmoothL1 };

/// kL2: mean squared error, grad 2(pred-target)/count.
/// kSmoothL1: mean of 0.5 d^2 (|d|<1) or |d|-0.5, the Fast R-CNN form.
/// An empty count (no elements) is not representable; callers skip the loss.
template <typename T>
LossResult<T> regression_loss(const BasicTensor<T>& pred,
                              const BasicTensor<T>& target,
                              RegressionLoss mode = RegressionLoss::kL2);

}  // namespace stnface
