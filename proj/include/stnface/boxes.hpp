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
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace stnface {

/// Axis-aligned box in continuous pixel coordinates; pixel i covers [i, i+1).
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  std::optional<double> score;
  std::optional<int> label;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x2 > x1 && y2 > y1; }

  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }
};

/// Intersection over union; 0 when either box is degenerate.
double iou(const BBox& a, const BBox& b);

/// Standard (dx, dy, dw, dh) parameterization of a box relative to a
/// reference box: dx = (gx - ax) / aw, dw = log(gw / aw).
struct BoxDelta {
  double dx = 0, dy = 0, dw = 0, dh = 0;
};

BoxDelta encode_box(const BBox& gt, const BBox& ref);
/// dw/dh are clamped to log(1000/16) before exponentiation.
BBox decode_box(const BoxDelta& d, const BBox& ref);
BBox clip_box(BBox b, double width, double height);

struct AnchorConfig {
  std::vector<double> scales{32, 64, 128};  // side length of the ratio-1 anchor
  std::vector<double> ratios{1.0, 1.5};     // h / w
  int stride = 8;

  int per_location() const {
    return static_cast<int>(scales.size() * ratios.size());
  }
};

/// Anchors ordered (y, x, scale, ratio), centred at (x*stride + (stride-1)/2,
/// y*stride + (stride-1)/2). A ratio-r anchor of scale s has w = s/sqrt(r),
/// h = s*sqrt(r). Not clipped.
std::vector<BBox> generate_anchors(const AnchorConfig& cfg, int feat_h, int feat_w);

/// Greedy suppression in descending score order (ties keep input order).
/// Boxes without a score count as score 0.
std::vector<int> nms(std::span<const BBox> boxes, double iou_thresh);

struct RpnTargetConfig {
  double pos_thresh = 0.7;
  double neg_thresh = 0.3;
  int batch_size = 300;
  double pos_fraction = 0.5;
};

struct RpnTargets {
  std::vector<int> labels;         // 1 positive, 0 negative, -1 ignored
  std::vector<BoxDelta> deltas;    // valid where labels == 1
  int num_pos = 0;
  int num_neg = 0;
};

/// Positives: IoU >= pos_thresh with some gt, plus every anchor achieving a
/// gt's best IoU. Negatives: IoU < neg_thresh against all gt. Sampled down to
/// batch_size with at most pos_fraction positives; per-gt best anchors are
/// kept before threshold positives when positives are subsampled.
RpnTargets assign_rpn_targets(std::span<const BBox> anchors,
                              std::span<const BBox> gt,
                              const RpnTargetConfig& cfg, std::mt19937_64& rng);

struct RoiTargetConfig {
  int rois_per_image = 32;
  double fg_fraction = 0.25;
  double fg_thresh = 0.5;
  double bg_thresh_hi = 0.5;
  double bg_thresh_lo = 0.0;
};

struct RoiTargets {
  std::vector<BBox> rois;
  std::vector<int> labels;  // 1 face, 0 background
  std::vector<BoxDelta> deltas;
};

/// Samples detection-head training regions from proposals plus gt boxes.
RoiTargets sample_rois(std::span<const BBox> proposals, std::span<const BBox> gt,
                       const RoiTargetConfig& cfg, std::mt19937_64& rng);

}  // namespace stnface
