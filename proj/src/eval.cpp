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

#include "stnface/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace stnface {

namespace {

std::vector<int> score_order(const std::vector<BBox>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[a].score.value_or(0.0) > dets[b].score.value_or(0.0);
  });
  return order;
}

}  // namespace

std::vector<int> greedy_match(const std::vector<BBox>& dets, const std::vector<BBox>& gt,
                              double iou_thresh) {
  std::vector<int> match(dets.size(), -1);
  std::vector<char> taken(gt.size(), 0);
  for (int d : score_order(dets)) {
    int best = -1;
    double best_iou = iou_thresh;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(dets[d], gt[g]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      match[d] = best;
    }
  }
  return match;
}

DetectionReport detection_sweep(const std::vector<ImageDetections>& images, double iou_thresh) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> all;
  DetectionReport rep;
  for (const auto& im : images) {
    rep.total_gt += static_cast<int>(im.gt.size());
    const auto m = greedy_match(im.dets, im.gt, iou_thresh);
    for (std::size_t i = 0; i < im.dets.size(); ++i) {
      all.push_back({im.dets[i].score.value_or(0.0), m[i] >= 0});
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });
  int tp = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].score;
    for (; i < all.size() && all[i].score == t; ++i) tp += all[i].tp;
    SweepPoint p;
    p.threshold = t;
    p.recall = rep.total_gt ? static_cast<double>(tp) / rep.total_gt : 0.0;
    p.precision = static_cast<double>(tp) / static_cast<double>(i);
    p.f1 = p.recall + p.precision > 0 ? 2 * p.recall * p.precision / (p.recall + p.precision) : 0;
    rep.sweep.push_back(p);
    if (p.f1 > rep.best_f1.f1) rep.best_f1 = p;
  }
  rep.max_recall = rep.sweep.empty() ? 0.0 : rep.sweep.back().recall;
  return rep;
}

double recall_at(const std::vector<ImageDetections>& images, double iou_thresh, double threshold) {
  int total = 0, hit = 0;
  for (const auto& im : images) {
    total += static_cast<int>(im.gt.size());
    std::vector<BBox> kept;
    for (const auto& d : im.dets) {
      if (d.score.value_or(0.0) >= threshold) kept.push_back(d);
    }
    for (int m : greedy_match(kept, im.gt, iou_thresh)) hit += m >= 0;
  }
  return total ? static_cast<double>(hit) / total : 0.0;
}

void write_detections(std::ostream& os, const std::string& image_id,
                      const std::vector<BBox>& dets) {
  std::ostringstream line;
  line << std::fixed << std::setprecision(4);
  for (const auto& d : dets) {
    line.str("");
    line << image_id << ' ' << d.x1 << ' ' << d.y1 << ' ' << d.x2 << ' ' << d.y2 << ' '
         << d.score.value_or(0.0) << '\n';
    os << line.str();
  }
}

std::vector<std::pair<std::string, std::vector<BBox>>> read_detections(std::istream& is) {
  std::vector<std::pair<std::string, std::vector<BBox>>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string id;
    BBox b;
    double score;
    if (!(ss >> id >> b.x1 >> b.y1 >> b.x2 >> b.y2 >> score)) {
      throw ParseError(lineno, "expected 'image_id x1 y1 x2 y2 score'");
    }
    b.score = score;
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == id; });
    if (it == out.end()) {
      out.emplace_back(id, std::vector<BBox>{});
      it = std::prev(out.end());
    }
    it->second.push_back(b);
  }
  return out;
}

VerificationReport verification_report(const std::vector<ScoredPair>& calib,
                                       const std::vector<ScoredPair>& test) {
  const auto choice = find_best_threshold(calib);
  return {choice.threshold, choice.accuracy, pair_accuracy(test, choice.threshold)};
}

}  // namespace stnface
