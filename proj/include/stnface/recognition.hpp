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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stnface/backbone.hpp"
#include "stnface/layers.hpp"

namespace stnface {

/// out = ReLU(F(x) + shortcut(x)), F = conv3x3 -> ReLU -> conv3x3. The
/// shortcut is the identity when channel counts agree, else a 1x1 conv.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, int in_ch, int out_ch)
      : conv1_(name + ".conv1", in_ch, out_ch, 3, 1, 1),
        conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1),
        project_(in_ch != out_ch) {
    if (project_) proj_ = Conv2dLayer<T>(name + ".proj", in_ch, out_ch, 1, 1, 0);
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) {
    const int in_ch = conv1_.weight.value.dim(1);
    if (x.rank() != 4 || x.dim(1) != in_ch) {
      throw DimensionError("residual block expects " + std::to_string(in_ch) +
                           " input channels, got " + shape_str(x.shape()));
    }
    auto f = conv2_.forward(mid_relu_.forward(conv1_.forward(x)));
    auto s = project_ ? proj_.forward(x) : x;
    for (std::size_t i = 0; i < f.numel(); ++i) f[i] += s[i];
    f.drop_grad();
    return out_relu_.forward(f);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad = true) {
    auto g = out_relu_.backward(grad_out);
    auto gx = conv1_.backward(mid_relu_.backward(conv2_.backward(g)), need_input_grad);
    if (!need_input_grad) {
      if (project_) proj_.backward(g, false);
      return gx;
    }
    auto gs = project_ ? proj_.backward(g) : g;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gs[i];
    return gx;
  }

  void init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (project_) proj_.init(rng);
  }

  void collect(ParamRefs<T>& out) {
    conv1_.collect(out);
    conv2_.collect(out);
    if (project_) proj_.collect(out);
  }

  Conv2dLayer<T>& conv1() { return conv1_; }
  Conv2dLayer<T>& conv2() { return conv2_; }
  T min_relu_margin() const {
    return std::min(mid_relu_.min_abs_input(), out_relu_.min_abs_input());
  }

 private:
  Conv2dLayer<T> conv1_;
  Conv2dLayer<T> conv2_;
  bool project_ = false;
  Conv2dLayer<T> proj_;
  ReluLayer<T> mid_relu_;
  ReluLayer<T> out_relu_;
};

/// Side length of the ROI-pooled region fed to the SNet when the first
/// share_depth backbone blocks are shared: the SNet's replica blocks must
/// bring it down to 7x7.
inline int snet_input_size(int share_depth) {
  return 7 << (3 - std::min(share_depth, 3));
}

/// Throws ConfigError unless share_depth is in {0..4}.
void check_share_depth(int share_depth);

struct SNetConfig {
  int share_depth = 3;
  BackboneConfig backbone;
  std::vector<int> res_widths{32, 64, 128};
  int embed_dim = 512;

  int input_channels() const { return backbone.channels_at(share_depth); }
};

/// Recognition feature extractor: private copies of the backbone blocks that
/// are not shared (share_depth+1 .. 4), a residual stack, global average
/// pooling and an FC to the embedding.
template <typename T>
class SNet {
 public:
  SNet() = default;
  explicit SNet(const SNetConfig& cfg) : cfg_(cfg) {
    check_share_depth(cfg.share_depth);
    for (int k = cfg.share_depth + 1; k <= kBackboneBlocks; ++k) {
      blocks_.emplace_back("snet.conv" + std::to_string(k),
                           cfg.backbone.channels_at(k - 1), cfg.backbone.widths[k - 1],
                           block_pools(k));
    }
    int ch = cfg.backbone.channels_at(kBackboneBlocks);
    for (std::size_t i = 0; i < cfg.res_widths.size(); ++i) {
      res_.emplace_back("snet.res" + std::to_string(i + 1), ch, cfg.res_widths[i]);
      ch = cfg.res_widths[i];
    }
    fc_ = LinearLayer<T>("snet.fc", ch, cfg.embed_dim);
  }

  /// region [R, C_k, S, S] with S = snet_input_size(share_depth) -> [R, D].
  BasicTensor<T> forward(const BasicTensor<T>& region) {
    const int s = snet_input_size(cfg_.share_depth);
    if (region.rank() != 4 || region.dim(1) != cfg_.input_channels() ||
        region.dim(2) != s || region.dim(3) != s) {
      throw DimensionError("snet expects [R," + std::to_string(cfg_.input_channels()) +
                           "," + std::to_string(s) + "," + std::to_string(s) +
                           "], got " + shape_str(region.shape()));
    }
    BasicTensor<T> h = region;
    h.drop_grad();
    for (auto& b : blocks_) h = b.forward(h);
    for (auto& r : res_) h = r.forward(h);
    pooled_shape_ = h.shape();
    return fc_.forward(avgpool_global_forward(h));
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_embed, bool need_input_grad = true) {
    auto g = avgpool_global_backward(fc_.backward(grad_embed), pooled_shape_);
    for (std::size_t i = res_.size(); i-- > 0;) {
      const bool last = i == 0 && blocks_.empty();
      g = res_[i].backward(g, !last || need_input_grad);
    }
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      g = blocks_[i].backward(g, i > 0 || need_input_grad);
    }
    return g;
  }

  void init(std::mt19937_64& rng) {
    for (auto& b : blocks_) b.init(rng);
    for (auto& r : res_) r.init(rng);
    fc_.init(rng);
  }

  void collect(ParamRefs<T>& out) {
    for (auto& b : blocks_) b.collect(out);
    for (auto& r : res_) r.collect(out);
    fc_.collect(out);
  }

  std::size_t param_count() {
    ParamRefs<T> ps;
    collect(ps);
    std::size_t n = 0;
    for (auto* p : ps) n += p->value.numel();
    return n;
  }

  const SNetConfig& config() const { return cfg_; }
  std::vector<ResidualBlock<T>>& residual_blocks() { return res_; }

 private:
  SNetConfig cfg_;
  std::vector<ConvBlock<T>> blocks_;
  std::vector<ResidualBlock<T>> res_;
  LinearLayer<T> fc_;
  Shape pooled_shape_;
};

/// One learned center per training identity. Updated only by
/// update_centers, never by the optimizer.
struct CenterBank {
  Tensor centers;  // [num_identities, D]

  CenterBank() = default;
  CenterBank(int num_identities, int dim) : centers({num_identities, dim}) {}
  int size() const { return centers.empty() ? 0 : centers.dim(0); }
  int dim() const { return centers.empty() ? 0 : centers.dim(1); }
};

/// loss = (lambda/2) * mean_i ||x_i - c_{y_i}||^2, grad = lambda (x_i - c_{y_i}) / N.
/// The bank is read only. Throws IndexError on a label without a center.
template <typename T>
LossResult<T> center_loss(const BasicTensor<T>& embeddings, std::span<const int> labels,
                          const CenterBank& bank, double lambda);

/// c_j <- c_j - alpha * sum_{i: y_i = j} (c_j - x_i) / (1 + n_j).
/// Order of samples within the batch does not affect the result beyond
/// float summation order.
void update_centers(CenterBank& bank, const Tensor& embeddings,
                    std::span<const int> labels, double alpha);

struct Embedding {
  std::vector<float> vector;
  std::optional<int> label;
};

/// Cosine similarity. Throws InputError on a dimension mismatch or a zero
/// vector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct Verdict {
  bool same = false;
  double similarity = 0;
};

Verdict verify(const Embedding& a, const Embedding& b, double threshold);

struct ScoredPair {
  double similarity = 0;
  bool same = false;
};

struct ThresholdChoice {
  double threshold = 0;
  double accuracy = 0;
};

/// Accuracy of "same iff similarity >= threshold".
double pair_accuracy(std::span<const ScoredPair> pairs, double threshold);

/// Best accuracy over the candidate thresholds {each similarity} plus one
/// just above the maximum (reject everything). Ties go to the lowest
/// threshold. Throws InputError on an empty set.
ThresholdChoice find_best_threshold(std::span<const ScoredPair> pairs);

/// "EMB1" then per record: u32 label, u32 D, D little-endian f32. Records
/// without a label are written with label 0xFFFFFFFF.
void write_embeddings(const std::filesystem::path& path, std::span<const Embedding> embs);
std::vector<Embedding> read_embeddings(const std::filesystem::path& path);

}  // namespace stnface
