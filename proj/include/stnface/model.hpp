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

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stnface/backbone.hpp"
#include "stnface/boxes.hpp"
#include "stnface/detection_head.hpp"
#include "stnface/recognition.hpp"
#include "stnface/roi_pool.hpp"

namespace stnface {

struct ModelConfig {
  BackboneConfig backbone;
  int share_depth = 3;
  AnchorConfig anchors;
  int rpn_channels = 32;
  RpnTargetConfig rpn_targets;
  RoiTargetConfig roi_targets;
  int pre_nms_train = 600;
  int pre_nms_test = 300;
  int proposals_train = 64;
  int proposals_test = 16;
  double rpn_nms = 0.7;
  double det_nms = 0.3;
  double min_box_size = 4.0;
  std::vector<int> det_fc{256, 256};
  StnMode det_stn = StnMode::kLearned;
  StnMode recog_stn = StnMode::kLearned;
  double stn_lr_mult = 0.1;  // localization heads of both transformers
  std::vector<int> res_widths{32, 64, 128};
  int embed_dim = 512;
  int num_identities = 20;
  RegressionLoss box_loss = RegressionLoss::kL2;
  std::array<double, 4> bbox_std{0.1, 0.1, 0.2, 0.2};
  double lambda_c = 0.008;
  double alpha_c = 0.5;
};

/// One training image: [1,3,H,W] pixels in [0,1], boxes, and per-box
/// identities (-1 where unknown).
struct Sample {
  Tensor image;
  std::vector<BBox> boxes;
  std::vector<int> identities;
};

/// Per-source loss weights of the multi-task objective.
struct BranchWeights {
  double rpn = 0;
  double det = 0;
  double recog = 0;
};

struct PassLosses {
  double rpn = 0;      // classification + regression
  double det = 0;      // classification + regression
  double softmax = 0;  // identity classification
  double center = 0;   // already scaled by lambda_c
};

/// Shared-conv RPN: conv3x3 + ReLU, then 1x1 objectness (2 per anchor,
/// channel 2a = background, 2a+1 = face) and 1x1 deltas (4 per anchor).
class RpnHead {
 public:
  RpnHead() = default;
  RpnHead(int in_channels, int mid_channels, int anchors_per_location);

  struct Output {
    Tensor logits;  // [A_total, 2], anchor order of generate_anchors
    Tensor deltas;  // [A_total, 4]
  };
  Output forward(const Tensor& feat);
  Tensor backward(const Tensor& grad_logits, const Tensor& grad_deltas,
                  bool need_input_grad);

  void init(std::mt19937_64& rng);
  void collect(ParamRefs<float>& out);

 private:
  int A_ = 0;
  Conv2dLayer<float> conv_;
  ReluLayer<float> relu_;
  Conv2dLayer<float> cls_;
  Conv2dLayer<float> reg_;
  Shape map_shape_;
};

/// Parameter groups, addressed by name prefix.
inline const std::vector<std::string> kDetectionGroups{"mnet.", "rpn.", "dstn.", "det."};
inline const std::vector<std::string> kRecognitionGroups{"rstn.", "snet.", "recog."};

bool name_in_groups(const std::string& name, const std::vector<std::string>& prefixes);

/// The full detection + alignment + recognition network.
class FaceModel {
 public:
  explicit FaceModel(const ModelConfig& cfg);
  FaceModel(const FaceModel&) = delete;
  FaceModel& operator=(const FaceModel&) = delete;

  void init(std::uint64_t seed);

  /// Forward + backward of one sample under the given branch weights.
  /// Gradients accumulate into the parameters' grad buffers, scaled by
  /// grad_scale. Branches with weight 0 are not run backward, so their
  /// parameters receive exactly zero gradient. Branches whose parameters
  /// are all frozen are not run backward either.
  PassLosses train_pass(const Sample& sample, const BranchWeights& w, double grad_scale,
                        std::mt19937_64& rng);

  /// Final detections (face score in [0,1]) after NMS, sorted by score.
  std::vector<BBox> detect(const Tensor& image);

  /// Embeddings of the given face boxes in one image, [R, D].
  Tensor embed(const Tensor& image, const std::vector<BBox>& boxes);

  ParamRefs<float>& params() { return params_; }
  BasicParam<float>* find_param(const std::string& name);
  void set_frozen(const std::vector<std::string>& prefixes, bool frozen);
  CenterBank& centers() { return centers_; }
  const ModelConfig& config() const { return cfg_; }
  SNet<float>& snet() { return snet_; }
  DetectionHead<float>& det_head() { return det_; }
  SpatialTransformer<float>& recog_stn() { return rstn_; }

 private:
  std::vector<BBox> propose(const RpnHead::Output& rpn, const std::vector<BBox>& anchors,
                            double img_w, double img_h, bool training) const;
  bool any_trainable(const std::vector<std::string>& prefixes) const;

  ModelConfig cfg_;
  Backbone backbone_;
  RpnHead rpn_;
  DetectionHead<float> det_;
  SpatialTransformer<float> rstn_;
  SNet<float> snet_;
  LinearLayer<float> cls_;
  CenterBank centers_;
  ParamRefs<float> params_;

  RoiPoolResult<float> det_pool_;
  RoiPoolResult<float> rec_pool_;
};

}  // namespace stnface
