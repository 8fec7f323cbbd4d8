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

#include "stnface/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stnface {

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) return 0.0;
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

BoxDelta encode_box(const BBox& gt, const BBox& ref) {
  return {(gt.cx() - ref.cx()) / ref.width(), (gt.cy() - ref.cy()) / ref.height(),
          std::log(gt.width() / ref.width()), std::log(gt.height() / ref.height())};
}

BBox decode_box(const BoxDelta& d, const BBox& ref) {
  static const double kMaxLog = std::log(1000.0 / 16.0);
  const double cx = ref.cx() + d.dx * ref.width();
  const double cy = ref.cy() + d.dy * ref.height();
  const double w = ref.width() * std::exp(std::min(d.dw, kMaxLog));
  const double h = ref.height() * std::exp(std::min(d.dh, kMaxLog));
  return BBox::from_center(cx, cy, w, h);
}

BBox clip_box(BBox b, double width, double height) {
  b.x1 = std::clamp(b.x1, 0.0, width);
  b.x2 = std::clamp(b.x2, 0.0, width);
  b.y1 = std::clamp(b.y1, 0.0, height);
  b.y2 = std::clamp(b.y2, 0.0, height);
  return b;
}

std::vector<BBox> generate_anchors(const AnchorConfig& cfg, int feat_h, int feat_w) {
  std::vector<BBox> out;
  out.reserve(static_cast<std::size_t>(feat_h) * feat_w * cfg.per_location());
  const double off = (cfg.stride - 1) / 2.0;
  for (int y = 0; y < feat_h; ++y) {
    for (int x = 0; x < feat_w; ++x) {
      const double cx = x * cfg.stride + off, cy = y * cfg.stride + off;
      for (double s : cfg.scales) {
        for (double r : cfg.ratios) {
          const double sr = std::sqrt(r);
          out.push_back(BBox::from_center(cx, cy, s / sr, s * sr));
        }
      }
    }
  }
  return out;
}

std::vector<int> nms(std::span<const BBox> boxes, double iou_thresh) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return boxes[a].score.value_or(0.0) > boxes[b].score.value_or(0.0);
  });
  std::vector<char> suppressed(boxes.size(), 0);
  std::vector<int> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int a = order[i];
    if (suppressed[a]) continue;
    keep.push_back(a);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const int b = order[j];
      if (!suppressed[b] && iou(boxes[a], boxes[b]) >= iou_thresh) suppressed[b] = 1;
    }
  }
  return keep;
}

namespace {

void subsample(std::vector<int>& idx, std::size_t keep, std::mt19937_64& rng) {
  if (idx.size() <= keep) return;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(keep);
}

}  // namespace

RpnTargets assign_rpn_targets(std::span<const BBox> anchors,
                              std::span<const BBox> gt,
                              const RpnTargetConfig& cfg, std::mt19937_64& rng) {
  const std::size_t A = anchors.size();
  RpnTargets t;
  t.labels.assign(A, -1);
  t.deltas.assign(A, BoxDelta{});
  std::vector<double> best_iou(A, 0.0);
  std::vector<int> best_gt(A, -1);
  std::vector<double> gt_best(gt.size(), 0.0);
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(anchors[a], gt[g]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      gt_best[g] = std::max(gt_best[g], v);
    }
  }

  std::vector<int> forced, thresh, negs;
  std::vector<char> is_forced(A, 0);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    if (gt_best[g] <= 0.0) continue;
    for (std::size_t a = 0; a < A; ++a) {
      if (iou(anchors[a], gt[g]) == gt_best[g] && !is_forced[a]) {
        is_forced[a] = 1;
        forced.push_back(static_cast<int>(a));
        // A forced anchor regresses toward the gt it is best for.
        if (best_iou[a] < gt_best[g]) best_gt[a] = static_cast<int>(g);
      }
    }
  }
  for (std::size_t a = 0; a < A; ++a) {
    if (is_forced[a]) continue;
    if (best_iou[a] >= cfg.pos_thresh) {
      thresh.push_back(static_cast<int>(a));
    } else if (best_iou[a] < cfg.neg_thresh) {
      negs.push_back(static_cast<int>(a));
    }
  }

  const std::size_t max_pos =
      static_cast<std::size_t>(std::floor(cfg.pos_fraction * cfg.batch_size));
  subsample(forced, max_pos, rng);
  subsample(thresh, max_pos - forced.size(), rng);
  std::vector<int> pos = forced;
  pos.insert(pos.end(), thresh.begin(), thresh.end());
  subsample(negs, static_cast<std::size_t>(cfg.batch_size) - pos.size(), rng);

  for (int a : pos) {
    t.labels[a] = 1;
    t.deltas[a] = encode_box(gt[best_gt[a]], anchors[a]);
  }
  for (int a : negs) t.labels[a] = 0;
  t.num_pos = static_cast<int>(pos.size());
  t.num_neg = static_cast<int>(negs.size());
  return t;
}

RoiTargets sample_rois(std::span<const BBox> proposals, std::span<const BBox> gt,
                       const RoiTargetConfig& cfg, std::mt19937_64& rng) {
  std::vector<BBox> all(proposals.begin(), proposals.end());
  all.insert(all.end(), gt.begin(), gt.end());
  std::vector<int> fg, bg;
  std::vector<int> match(all.size(), -1);
  for (std::size_t i = 0; i < all.size(); ++i) {
    double best = 0.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double v = iou(all[i], gt[g]);
      if (v > best) {
        best = v;
        match[i] = static_cast<int>(g);
      }
    }
    if (best >= cfg.fg_thresh) {
      fg.push_back(static_cast<int>(i));
    } else if (best < cfg.bg_thresh_hi && best >= cfg.bg_thresh_lo) {
      bg.push_back(static_cast<int>(i));
    }
  }
  const std::size_t max_fg = static_cast<std::size_t>(
      std::lround(cfg.fg_fraction * cfg.rois_per_image));
  subsample(fg, max_fg, rng);
  subsample(bg, static_cast<std::size_t>(cfg.rois_per_image) - fg.size(), rng);

  RoiTargets t;
  for (int i : fg) {
    t.rois.push_back(all[i]);
    t.labels.push_back(1);
    t.deltas.push_back(encode_box(gt[match[i]], all[i]));
  }
  for (int i : bg) {
    t.rois.push_back(all[i]);
    t.labels.push_back(0);
    t.deltas.push_back(BoxDelta{});
  }
  return t;
}

}  // namespace stnface
