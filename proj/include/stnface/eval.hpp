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

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "stnface/boxes.hpp"
#include "stnface/recognition.hpp"

namespace stnface {

/// Greedy matching: detections in descending score order (stable) each take
/// the still-unmatched gt box of highest IoU, if that IoU >= iou_thresh.
/// Returns, per detection in input order, the matched gt index or -1.
std::vector<int> greedy_match(const std::vector<BBox>& dets, const std::vector<BBox>& gt,
                              double iou_thresh);

struct ImageDetections {
  std::vector<BBox> dets;
  std::vector<BBox> gt;
};

struct SweepPoint {
  double threshold = 0;  // detections with score >= threshold are kept
  double recall = 0;
  double precision = 0;
  double f1 = 0;
};

struct DetectionReport {
  std::vector<SweepPoint> sweep;  // descending threshold
  SweepPoint best_f1;
  double max_recall = 0;  // every detection kept
  int total_gt = 0;
};

/// Recall/precision at every distinct detection score. Because matching is
/// greedy in score order, the matching at threshold t is the prefix of the
/// full matching.
DetectionReport detection_sweep(const std::vector<ImageDetections>& images, double iou_thresh);

/// Recall of gt boxes keeping detections with score >= threshold.
double recall_at(const std::vector<ImageDetections>& images, double iou_thresh, double threshold);

/// "image_id x1 y1 x2 y2 score" with four decimals.
void write_detections(std::ostream& os, const std::string& image_id, const std::vector<BBox>& dets);
/// Groups lines by image id, in order of first appearance.
std::vector<std::pair<std::string, std::vector<BBox>>> read_detections(std::istream& is);

struct VerificationReport {
  double threshold = 0;
  double calib_accuracy = 0;
  double test_accuracy = 0;
};

/// Threshold fit on calibration pairs, then applied to the test pairs.
VerificationReport verification_report(const std::vector<ScoredPair>& calib,
                                       const std::vector<ScoredPair>& test);

}  // namespace stnface
