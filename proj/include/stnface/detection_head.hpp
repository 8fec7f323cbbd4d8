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
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "stnface/layers.hpp"
#include "stnface/spatial_transformer.hpp"

namespace stnface {

struct DetectionHeadConfig {
  int channels = 32;
  int roi_size = 7;
  std::vector<int> fc_widths{256, 256};
  StnMode stn = StnMode::kLearned;
};

/// Per-region classifier/regressor on ROI-pooled features: spatial
/// transformer, FC trunk with ReLU, then parallel face/background score FC
/// and class-agnostic box-delta FC.
template <typename T>
class DetectionHead {
 public:
  struct Output {
    BasicTensor<T> scores;  // [R,2] logits, column 1 = face
    BasicTensor<T> deltas;  // [R,4]
  };

  DetectionHead() = default;
  explicit DetectionHead(const DetectionHeadConfig& cfg)
      : cfg_(cfg), stn_("dstn", cfg.channels, cfg.roi_size, cfg.stn) {
    int in = cfg.channels * cfg.roi_size * cfg.roi_size;
    for (std::size_t i = 0; i < cfg.fc_widths.size(); ++i) {
      trunk_.emplace_back("det.fc" + std::to_string(i + 1), in, cfg.fc_widths[i]);
      in = cfg.fc_widths[i];
    }
    relus_.resize(trunk_.size());
    score_ = LinearLayer<T>("det.score", in, 2);
    box_ = LinearLayer<T>("det.box", in, 4);
  }

  Output forward(const BasicTensor<T>& pooled) {
    auto v = stn_.forward(pooled);
    in_shape_ = v.shape();
    v.reshape({v.dim(0), v.dim(1) * v.dim(2) * v.dim(3)});
    for (std::size_t i = 0; i < trunk_.size(); ++i) {
      v = relus_[i].forward(trunk_[i].forward(v));
    }
    return {score_.forward(v), box_.forward(v)};
  }

  /// Either gradient may be empty (treated as zero).
  BasicTensor<T> backward(const BasicTensor<T>& grad_scores,
                          const BasicTensor<T>& grad_deltas) {
    BasicTensor<T> g;
    if (!grad_scores.empty()) g = score_.backward(grad_scores);
    if (!grad_deltas.empty()) {
      auto gb = box_.backward(grad_deltas);
      if (g.empty()) {
        g = std::move(gb);
      } else {
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gb[i];
      }
    }
    for (std::size_t i = trunk_.size(); i-- > 0;) {
      g = trunk_[i].backward(relus_[i].backward(g));
    }
    g.reshape(in_shape_);
    return stn_.backward(g);
  }

  void init(std::mt19937_64& rng) {
    stn_.init(rng);
    for (auto& fc : trunk_) fc.init(rng);
    score_.init(rng);
    box_.init(rng);
  }

  void collect(ParamRefs<T>& out) {
    stn_.collect(out);
    for (auto& fc : trunk_) fc.collect(out);
    score_.collect(out);
    box_.collect(out);
  }

  SpatialTransformer<T>& stn() { return stn_; }
  T min_relu_margin() const {
    T m = std::numeric_limits<T>::infinity();
    for (const auto& r : relus_) m = std::min(m, r.min_abs_input());
    return m;
  }

 private:
  DetectionHeadConfig cfg_;
  SpatialTransformer<T> stn_;
  std::vector<LinearLayer<T>> trunk_;
  std::vector<ReluLayer<T>> relus_;
  LinearLayer<T> score_;
  LinearLayer<T> box_;
  Shape in_shape_;
};

}  // namespace stnface
