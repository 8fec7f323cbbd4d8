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

#include <random>
#include <string>

#include "stnface/layers.hpp"
#include "stnface/stn.hpp"

namespace stnface {

/// Regresses one affine theta per region: conv(filters, k) -> maxpool(pool)
/// -> FC to 6. The FC starts at weight 0, bias [1 0 0 0 1 0], so every region
/// maps to the identity transform until training moves it.
template <typename T>
class LocalizationHead {
 public:
  LocalizationHead() = default;
  LocalizationHead(const std::string& name, int in_channels, int in_size,
                   int filters = 20, int kernel = 5, int pool = 2)
      : in_channels_(in_channels), in_size_(in_size), pool_(pool, pool) {
    const int conv_size = in_size - kernel + 1;
    if (conv_size < pool) {
      throw DimensionError(name + ": region size " + std::to_string(in_size) +
                           " too small for kernel " + std::to_string(kernel));
    }
    pooled_ = (conv_size - pool) / pool + 1;
    conv_ = Conv2dLayer<T>(name + ".conv", in_channels, filters, kernel, 1, 0);
    fc_ = LinearLayer<T>(name + ".fc", filters * pooled_ * pooled_, 6);
    reset_fc();
  }

  BasicTensor<T> forward(const BasicTensor<T>& region) {
    require_rank(region.shape(), 4, "localization head input");
    if (region.dim(1) != in_channels_ || region.dim(2) != in_size_ ||
        region.dim(3) != in_size_) {
      throw DimensionError("localization head expects [R," +
                           std::to_string(in_channels_) + "," +
                           std::to_string(in_size_) + "," +
                           std::to_string(in_size_) + "], got " +
                           shape_str(region.shape()));
    }
    auto h = pool_.forward(conv_.forward(region));
    pooled_shape_ = h.shape();
    h.reshape({h.dim(0), h.dim(1) * h.dim(2) * h.dim(3)});
    return fc_.forward(h);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_theta) {
    auto g = fc_.backward(grad_theta);
    g.reshape(pooled_shape_);
    return conv_.backward(pool_.backward(g));
  }

  void init(std::mt19937_64& rng) {
    conv_.init(rng);
    reset_fc();
  }

  void collect(ParamRefs<T>& out) {
    conv_.collect(out);
    fc_.collect(out);
  }

  int in_size() const { return in_size_; }
  Conv2dLayer<T>& conv() { return conv_; }
  LinearLayer<T>& fc() { return fc_; }

 private:
  void reset_fc() {
    fc_.weight.value.fill(T(0));
    const T id[6] = {1, 0, 0, 0, 1, 0};
    for (int k = 0; k < 6; ++k) fc_.bias.value[k] = id[k];
  }

  int in_channels_ = 0;
  int in_size_ = 0;
  int pooled_ = 0;
  Conv2dLayer<T> conv_;
  MaxPoolLayer<T> pool_;
  LinearLayer<T> fc_;
  Shape pooled_shape_;
};

enum class StnMode { kLearned, kIdentity };

/// Localization head + affine grid + bilinear sampler. Output keeps the input
/// region size. In kIdentity mode theta is pinned to the identity and the
/// head is bypassed.
template <typename T>
class SpatialTransformer {
 public:
  SpatialTransformer() = default;
  SpatialTransformer(const std::string& name, int channels, int size,
                     StnMode mode = StnMode::kLearned)
      : mode_(mode), size_(size), head_(name, channels, size) {}

  BasicTensor<T> forward(const BasicTensor<T>& U) {
    if (mode_ == StnMode::kIdentity) {
      theta_ = BasicTensor<T>({U.dim(0), 6});
      for (int r = 0; r < U.dim(0); ++r) {
        theta_[r * 6 + 0] = T(1);
        theta_[r * 6 + 4] = T(1);
      }
      BasicTensor<T> V = U;
      V.drop_grad();
      return V;
    }
    U_ = U;
    U_.drop_grad();
    theta_ = head_.forward(U_);
    grid_ = affine_grid(theta_, Size2{size_, size_}, Size2{U.dim(2), U.dim(3)});
    return bilinear_sample_forward(U_, grid_);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_V) {
    if (mode_ == StnMode::kIdentity) return grad_V;
    auto sg = bilinear_sample_backward(grad_V, U_, grid_);
    auto gtheta = theta_backward(sg.grad_coords, grid_.out_size, grid_.src_size);
    auto gU = head_.backward(gtheta);
    auto dst = sg.grad_U.data();
    auto src = gU.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return std::move(sg.grad_U);
  }

  void init(std::mt19937_64& rng) { head_.init(rng); }
  void collect(ParamRefs<T>& out) {
    if (mode_ == StnMode::kLearned) head_.collect(out);
  }

  StnMode mode() const { return mode_; }
  const BasicTensor<T>& last_theta() const { return theta_; }
  LocalizationHead<T>& head() { return head_; }

 private:
  StnMode mode_ = StnMode::kLearned;
  int size_ = 7;
  LocalizationHead<T> head_;
  BasicTensor<T> U_;
  BasicTensor<T> theta_;
  BasicSampleGrid<T> grid_;
};

}  // namespace stnface
