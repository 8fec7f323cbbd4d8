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

// Stateful wrappers around the kernels in ops.hpp. Each layer owns its
// parameters, caches what its backward pass needs, and accumulates parameter
// gradients into the parameters' grad buffers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "stnface/ops.hpp"

namespace stnface {

template <typename T>
struct BasicParam {
  std::string name;
  BasicTensor<T> value;
  bool frozen = false;
  double lr_mult = 1.0;  // scales the solver learning rate

  void accumulate(const BasicTensor<T>& g) {
    value.ensure_grad();
    auto dst = value.grad();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
};

using Param = BasicParam<float>;

template <typename T>
using ParamRefs = std::vector<BasicParam<T>*>;

/// Throws if two parameters share a name.
template <typename T>
void check_unique_names(const ParamRefs<T>& params) {
  std::unordered_set<std::string> seen;
  for (const auto* p : params) {
    if (!seen.insert(p->name).second) {
      throw ConfigError(p->name, "duplicate parameter name");
    }
  }
}

template <typename T>
void zero_grads(const ParamRefs<T>& params) {
  for (auto* p : params) {
    p->value.ensure_grad();
    p->value.zero_grad();
  }
}

template <typename T>
void he_uniform(BasicTensor<T>& t, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, int in_ch, int out_ch, int kernel,
              int stride = 1, int pad = 0)
      : stride_(stride), pad_(pad) {
    weight = {name + ".weight", BasicTensor<T>({out_ch, in_ch, kernel, kernel})};
    bias = {name + ".bias", BasicTensor<T>({out_ch})};
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    x_ = x;
    x_.drop_grad();
    return conv2d_forward(x_, weight.value, bias.value, stride_, pad_);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out,
                          bool need_input_grad = true) {
    auto g = conv2d_backward(grad_out, x_, weight.value, stride_, pad_,
                             need_input_grad);
    weight.accumulate(g.weight);
    bias.accumulate(g.bias);
    return std::move(g.input);
  }

  void init(std::mt19937_64& rng) {
    he_uniform(weight.value, weight.value.dim(1) * weight.value.dim(2) *
                                 weight.value.dim(3), rng);
    bias.value.fill(T(0));
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  int out_channels() const { return weight.value.dim(0); }

  BasicParam<T> weight;
  BasicParam<T> bias;

 private:
  int stride_ = 1;
  int pad_ = 0;
  BasicTensor<T> x_;
};

template <typename T>
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(const std::string& name, int in_dim, int out_dim) {
    weight = {name + ".weight", BasicTensor<T>({in_dim, out_dim})};
    bias = {name + ".bias", BasicTensor<T>({out_dim})};
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    x_ = x;
    x_.drop_grad();
    return fc_forward(x_, weight.value, bias.value);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out,
                          bool need_input_grad = true) {
    auto g = fc_backward(grad_out, x_, weight.value, need_input_grad);
    weight.accumulate(g.weight);
    bias.accumulate(g.bias);
    return std::move(g.input);
  }

  void init(std::mt19937_64& rng) {
    he_uniform(weight.value, weight.value.dim(0), rng);
    bias.value.fill(T(0));
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  BasicParam<T> weight;
  BasicParam<T> bias;

 private:
  BasicTensor<T> x_;
};

template <typename T>
class ReluLayer {
 public:
  BasicTensor<T> forward(const BasicTensor<T>& x) {
    x_ = x;
    x_.drop_grad();
    return relu_forward(x_);
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) {
    return relu_backward(grad_out, x_);
  }
  // Smallest |x| seen by the last forward; used to keep finite-difference
  // probes away from the kink.
  T min_abs_input() const {
    T m = std::numeric_limits<T>::infinity();
    for (T v : x_.data()) m = std::min(m, std::abs(v));
    return m;
  }

 private:
  BasicTensor<T> x_;
};

template <typename T>
class MaxPoolLayer {
 public:
  MaxPoolLayer() = default;
  MaxPoolLayer(int kernel, int stride) : k_(kernel), stride_(stride) {}

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    in_shape_ = x.shape();
    auto r = maxpool2d_forward(x, k_, stride_);
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) const {
    return maxpool2d_backward(grad_out, std::span<const std::int64_t>(argmax_),
                              in_shape_);
  }

 private:
  int k_ = 2;
  int stride_ = 2;
  Shape in_shape_;
  std::vector<std::int64_t> argmax_;
};

}  // namespace stnface
