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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "stnface/boxes.hpp"
#include "stnface/roi_pool.hpp"
#include "test_util.hpp"

namespace stnface {
namespace {

BBox random_box(std::mt19937_64& rng, double extent = 100, double min_side = 1,
                double max_side = 40) {
  std::uniform_real_distribution<double> pos(0, extent), side(min_side, max_side);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + side(rng), y + side(rng)};
}

// Repeatedly keep the highest-scoring remaining box (earliest on ties) and
// drop everything overlapping it at or above the threshold.
std::vector<int> nms_oracle(const std::vector<BBox>& boxes, double thresh) {
  std::vector<int> alive(boxes.size());
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<int> keep;
  while (!alive.empty()) {
    int best = alive.front();
    for (int i : alive) {
      if (*boxes[i].score > *boxes[best].score) best = i;
    }
    keep.push_back(best);
    std::vector<int> next;
    for (int i : alive) {
      if (i != best && iou(boxes[i], boxes[best]) < thresh) next.push_back(i);
    }
    alive = next;
  }
  return keep;
}

TEST(Iou, Basics) {
  const BBox a{0, 0, 1, 1}, half{0.5, 0, 1.5, 1};
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, BBox{2, 2, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, half), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(BBox{0, 0, 2, 2}, BBox{1, 1, 3, 3}), 1.0 / 7.0);
  EXPECT_EQ(iou(a, BBox{1, 0, 2, 1}), 0.0);  // touching edges
}

TEST(Iou, SymmetricAndBounded) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const BBox a = random_box(rng), b = random_box(rng);
    const double ab = iou(a, b);
    EXPECT_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  }
}

TEST(BoxDelta, RoundTrip) {
  std::mt19937_64 rng(2);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const BBox gt = random_box(rng, 200, 4, 120), ref = random_box(rng, 200, 4, 120);
    const BBox back = decode_box(encode_box(gt, ref), ref);
    worst = std::max({worst, std::abs(back.x1 - gt.x1), std::abs(back.y1 - gt.y1),
                      std::abs(back.x2 - gt.x2), std::abs(back.y2 - gt.y2)});
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(BoxDelta, IdenticalBoxesGiveZeroDelta) {
  const BBox b{3, 4, 20, 30};
  const BoxDelta d = encode_box(b, b);
  EXPECT_EQ(d.dx, 0.0);
  EXPECT_EQ(d.dy, 0.0);
  EXPECT_EQ(d.dw, 0.0);
  EXPECT_EQ(d.dh, 0.0);
}

TEST(ClipBox, StaysInImage) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    BBox b = random_box(rng, 120, 1, 80);
    b.x1 -= 30;
    b.y1 -= 30;
    const BBox c = clip_box(b, 64, 48);
    EXPECT_GE(c.x1, 0);
    EXPECT_GE(c.y1, 0);
    EXPECT_LE(c.x2, 64);
    EXPECT_LE(c.y2, 48);
  }
}

TEST(Anchors, SingleCell) {
  AnchorConfig cfg{{16}, {1.0}, 8};
  auto a = generate_anchors(cfg, 1, 1);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_DOUBLE_EQ(a[0].cx(), 3.5);
  EXPECT_DOUBLE_EQ(a[0].cy(), 3.5);
  EXPECT_DOUBLE_EQ(a[0].width(), 16);
  EXPECT_DOUBLE_EQ(a[0].height(), 16);
}

TEST(Anchors, CountOrderAndArea) {
  AnchorConfig cfg{{24, 40}, {1.0, 1.5}, 8};
  auto a = generate_anchors(cfg, 2, 2);
  ASSERT_EQ(a.size(), 16u);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int s = 0; s < 2; ++s)
        for (int r = 0; r < 2; ++r) {
          const BBox& b = a[((y * 2 + x) * 2 + s) * 2 + r];
          EXPECT_DOUBLE_EQ(b.cx(), x * 8 + 3.5);
          EXPECT_DOUBLE_EQ(b.cy(), y * 8 + 3.5);
          EXPECT_NEAR(b.area(), cfg.scales[s] * cfg.scales[s], 1e-9);
          EXPECT_NEAR(b.height() / b.width(), cfg.ratios[r], 1e-12);
        }
}

TEST(Nms, SmallCases) {
  std::vector<BBox> one{{0, 0, 10, 10, 0.3}};
  EXPECT_EQ(nms(one, 0.5), std::vector<int>{0});
  std::vector<BBox> twins{{0, 0, 10, 10, 0.3}, {0, 0, 10, 10, 0.9}};
  EXPECT_EQ(nms(twins, 0.5), std::vector<int>{1});
}

TEST(Nms, MatchesBruteForceOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> score(0, 1);
  std::uniform_real_distribution<double> thresh(0.1, 0.8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<BBox> boxes;
    for (int i = 0; i < 50; ++i) {
      BBox b = random_box(rng, 60, 5, 40);
      // Coarse scores produce ties, which must keep input order.
      b.score = std::round(score(rng) * 20) / 20;
      boxes.push_back(b);
    }
    const double t = thresh(rng);
    const auto kept = nms(boxes, t);
    ASSERT_EQ(kept, nms_oracle(boxes, t)) << "trial " << trial;
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LT(iou(boxes[kept[i]], boxes[kept[j]]), t);
  }
}

TEST(RpnTargets, ExactAnchorIsPositiveWithZeroDelta) {
  AnchorConfig cfg{{16}, {1.0}, 8};
  auto anchors = generate_anchors(cfg, 4, 4);
  const BBox gt[] = {anchors[5]};
  std::mt19937_64 rng(5);
  auto t = assign_rpn_targets(anchors, gt, {}, rng);
  EXPECT_EQ(t.labels[5], 1);
  EXPECT_EQ(t.deltas[5].dx, 0.0);
  EXPECT_EQ(t.deltas[5].dw, 0.0);
}

TEST(RpnTargets, BestAnchorIsPositiveBelowThreshold) {
  AnchorConfig cfg{{16}, {1.0}, 16};
  auto anchors = generate_anchors(cfg, 3, 3);
  // Offset by half an anchor: best IoU is 1/3, far below 0.7.
  const BBox gt[] = {BBox{anchors[4].x1 + 8, anchors[4].y1, anchors[4].x2 + 8, anchors[4].y2}};
  std::mt19937_64 rng(6);
  auto t = assign_rpn_targets(anchors, gt, {}, rng);
  double best = 0;
  for (const auto& a : anchors) best = std::max(best, iou(a, gt[0]));
  EXPECT_LT(best, 0.7);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (iou(anchors[a], gt[0]) == best) { EXPECT_EQ(t.labels[a], 1); }
  }
}

TEST(RpnTargets, RandomInstanceProperties) {
  std::mt19937_64 rng(7);
  AnchorConfig cfg{{24, 40}, {1.0, 1.4}, 8};
  auto anchors = generate_anchors(cfg, 12, 16);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<BBox> gt;
    for (int i = 0; i < 1 + trial % 5; ++i) gt.push_back(random_box(rng, 90, 16, 48));
    RpnTargetConfig tc;
    tc.batch_size = 64;
    auto t = assign_rpn_targets(anchors, gt, tc, rng);
    EXPECT_LE(t.num_pos, 32);
    EXPECT_LE(t.num_pos + t.num_neg, 64);
    EXPECT_EQ(std::count(t.labels.begin(), t.labels.end(), 1), t.num_pos);
    EXPECT_EQ(std::count(t.labels.begin(), t.labels.end(), 0), t.num_neg);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      double best = 0;
      for (const auto& g : gt) best = std::max(best, iou(anchors[a], g));
      if (t.labels[a] == 0) { EXPECT_LT(best, tc.neg_thresh); }
      if (t.labels[a] != 1) continue;
      // Targets invert back onto some gt box.
      const BBox back = decode_box(t.deltas[a], anchors[a]);
      double hit = 0;
      for (const auto& g : gt) hit = std::max(hit, iou(back, g));
      EXPECT_NEAR(hit, 1.0, 1e-6);
    }
    // Without subsampling, each gt's best anchor is positive; unless that
    // anchor overlaps another gt more, it regresses onto this gt.
    RpnTargetConfig all = tc;
    all.batch_size = 4 * static_cast<int>(anchors.size());
    const auto full = assign_rpn_targets(anchors, gt, all, rng);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      double best = 0;
      for (const auto& a : anchors) best = std::max(best, iou(a, gt[g]));
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        if (iou(anchors[a], gt[g]) != best) continue;
        EXPECT_EQ(full.labels[a], 1);
        bool contested = false;
        for (std::size_t h = 0; h < gt.size(); ++h) contested |= h != g && iou(anchors[a], gt[h]) >= best;
        if (!contested) {
          EXPECT_GT(iou(decode_box(full.deltas[a], anchors[a]), gt[g]), 1 - 1e-6);
        }
      }
    }
  }
}

TEST(RpnTargets, NoGtMeansAllNegative) {
  AnchorConfig cfg{{16}, {1.0}, 8};
  auto anchors = generate_anchors(cfg, 3, 3);
  std::mt19937_64 rng(8);
  auto t = assign_rpn_targets(anchors, {}, {}, rng);
  EXPECT_EQ(t.num_pos, 0);
  EXPECT_EQ(t.num_neg, 9);
}

TEST(SampleRois, FractionsAndTargets) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<BBox> gt{random_box(rng, 100, 20, 40), random_box(rng, 100, 20, 40)};
    std::vector<BBox> props;
    for (int i = 0; i < 80; ++i) props.push_back(random_box(rng, 120, 10, 50));
    RoiTargetConfig cfg;
    auto t = sample_rois(props, gt, cfg, rng);
    const long fg = std::count(t.labels.begin(), t.labels.end(), 1);
    EXPECT_GE(fg, 1);  // gt boxes are always candidates
    EXPECT_LE(fg, 8);
    EXPECT_LE(t.rois.size(), 32u);
    for (std::size_t i = 0; i < t.rois.size(); ++i) {
      double best = 0;
      for (const auto& g : gt) best = std::max(best, iou(t.rois[i], g));
      if (t.labels[i] == 1) {
        EXPECT_GE(best, cfg.fg_thresh);
      } else {
        EXPECT_LT(best, cfg.bg_thresh_hi);
      }
    }
  }
}

TEST(RoiPool, ExactSevenCellCropIsIdentity) {
  std::mt19937_64 rng(10);
  auto feat = test::random_tensor<float>({1, 3, 10, 12}, rng);
  // Scale 1/8: pixels [16, 72) cover cells [2, 9).
  const BBox box[] = {{16, 8, 72, 64}};
  auto r = roi_pool_forward(feat, box, 1.0 / 8, {7, 7});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) EXPECT_EQ(r.output.at(0, c, i, j), feat.at(0, c, 1 + i, 2 + j));
}

TEST(RoiPool, ConstantMapAndDegenerateBox) {
  Tensor feat({1, 2, 6, 6}, 1.75f);
  const BBox boxes[] = {{3, 3, 3.5, 3.5}, {0, 0, 48, 48}, {40, 40, 47, 47}};
  auto r = roi_pool_forward(feat, boxes, 1.0 / 8, {7, 7});
  for (float v : r.output.data()) EXPECT_EQ(v, 1.75f);
  for (auto a : r.argmax) EXPECT_GE(a, 0);
}

TEST(RoiPool, MatchesBinOracleAndConservesGradient) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto feat = test::random_tensor<double>({1, 2, 9, 11}, rng);
    std::vector<BBox> boxes;
    for (int i = 0; i < 3; ++i) boxes.push_back(random_box(rng, 70, 1, 60));
    const Size2 out{1 + trial % 7, 1 + (trial * 3) % 7};
    auto r = roi_pool_forward(feat, boxes, 1.0 / 8, out);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const auto cr = roi_footprint(boxes[b], 1.0 / 8, 9, 11);
      const int nh = cr.y1 - cr.y0, nw = cr.x1 - cr.x0;
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < out.h; ++i)
          for (int j = 0; j < out.w; ++j) {
            const int h0 = cr.y0 + static_cast<int>(std::floor(double(i) * nh / out.h));
            const int h1 = cr.y0 + static_cast<int>(std::ceil(double(i + 1) * nh / out.h));
            const int w0 = cr.x0 + static_cast<int>(std::floor(double(j) * nw / out.w));
            const int w1 = cr.x0 + static_cast<int>(std::ceil(double(j + 1) * nw / out.w));
            double m = -1e300;
            for (int h = h0; h < h1; ++h)
              for (int w = w0; w < w1; ++w) m = std::max(m, feat.at(0, c, h, w));
            EXPECT_EQ(r.output.at(static_cast<int>(b), c, i, j), m);
          }
    }
    auto g = test::random_tensor<double>(r.output.shape(), rng);
    auto gf = roi_pool_backward(g, r.argmax, feat.shape());
    const double a = std::accumulate(g.data().begin(), g.data().end(), 0.0);
    const double s = std::accumulate(gf.data().begin(), gf.data().end(), 0.0);
    EXPECT_NEAR(a, s, 1e-10);
  }
}

}  // namespace
}  // namespace stnface
