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

#include <algorithm>
#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stnface/layers.hpp"

namespace stnface {

/// conv3x3(pad 1) -> ReLU [-> maxpool 2x2].
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_ch, int out_ch, bool pool)
      : conv_(name, in_ch, out_ch, 3, 1, 1), pooled_(pool), pool_(2, 2) {}

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    auto h = relu_.forward(conv_.forward(x));
    return pooled_ ? pool_.forward(h) : h;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad = true) {
    auto g = pooled_ ? pool_.backward(grad_out) : grad_out;
    return conv_.backward(relu_.backward(g), need_input_grad);
  }

  void init(std::mt19937_64& rng) { conv_.init(rng); }
  void collect(ParamRefs<T>& out) { conv_.collect(out); }
  bool pooled() const { return pooled_; }
  int out_channels() const { return conv_.out_channels(); }

 private:
  Conv2dLayer<T> conv_;
  ReluLayer<T> relu_;
  bool pooled_ = false;
  MaxPoolLayer<T> pool_;
};

/// Number of backbone blocks; blocks 1..3 halve the resolution, block 4 keeps
/// it, so the deepest feature stride is 8.
inline constexpr int kBackboneBlocks = 4;

inline bool block_pools(int block) { return block <= 3; }

/// Pixel stride of the output of block k (k = 0 is the image itself).
inline int feature_stride(int k) { return 1 << std::min(k, 3); }

struct BackboneConfig {
  int in_channels = 3;
  std::array<int, kBackboneBlocks> widths{8, 16, 32, 32};

  int channels_at(int k) const { return k == 0 ? in_channels : widths[k - 1]; }
};

/// The shared main network: four conv blocks in the VGG pattern.
class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(const BackboneConfig& cfg) : cfg_(cfg) {
    for (int k = 1; k <= kBackboneBlocks; ++k) {
      blocks_.emplace_back("mnet.conv" + std::to_string(k), cfg.channels_at(k - 1),
                           cfg.widths[k - 1], block_pools(k));
    }
  }

  /// Returns features x0 (input) .. x4; kept until the next forward.
  const std::vector<Tensor>& forward(const Tensor& image) {
    feats_.assign(1, image);
    feats_[0].drop_grad();
    for (auto& b : blocks_) feats_.push_back(b.forward(feats_.back()));
    return feats_;
  }

  const Tensor& feature(int k) const { return feats_.at(k); }

  /// grads[k] is the loss gradient w.r.t. x_k (may be empty). Propagates
  /// down to block 1; the image gradient is not formed.
  void backward(std::array<Tensor, kBackboneBlocks + 1>& grads) {
    Tensor g;
    for (int k = kBackboneBlocks; k >= 1; --k) {
      if (!grads[k].empty()) {
        if (g.empty()) {
          g = std::move(grads[k]);
        } else {
          auto dst = g.data();
          auto src = grads[k].data();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      if (g.empty()) continue;
      g = blocks_[k - 1].backward(g, k > 1);
    }
  }

  void init(std::mt19937_64& rng) {
    for (auto& b : blocks_) b.init(rng);
  }
  void collect(ParamRefs<float>& out) {
    for (auto& b : blocks_) b.collect(out);
  }
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::vector<ConvBlock<float>> blocks_;
  std::vector<Tensor> feats_;
};

}  // namespace stnface
