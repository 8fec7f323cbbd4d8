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
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stnface/boxes.hpp"
#include "stnface/model.hpp"
#include "stnface/stn.hpp"
#include "stnface/training.hpp"

namespace stnface {

// ---- stitched batches -------------------------------------------------------

struct StitchLayout {
  int rows = 3;
  int cols = 4;
  int tile = 250;

  int count() const { return rows * cols; }
  int width() const { return cols * tile; }
  int height() const { return rows * tile; }
};

/// One tile: image [3,tile,tile], its boxes and per-box identities.
struct Tile {
  Tensor image;
  std::vector<BBox> boxes;
  std::vector<int> identities;
};

/// Row-major grid of exactly layout.count() tiles of layout.tile pixels.
/// Boxes are shifted by (col*tile, row*tile). Throws InputError otherwise.
Sample stitch_batch(const std::vector<Tile>& tiles, const StitchLayout& layout);

/// Inverse of the box part of stitch_batch: per-cell boxes and identities
/// in cell-local coordinates. A box belongs to the cell holding its centre.
std::vector<Tile> unstitch_boxes(const Sample& sample, const StitchLayout& layout);

// ---- synthetic faces --------------------------------------------------------

/// Per-identity appearance, fixed for all instances of one identity. Lengths
/// are in units of the nominal head half-height.
struct FaceGeometry {
  double aspect = 0.8;  // head half-width / half-height
  float skin[3] = {0.8f, 0.6f, 0.5f};
  float hair[3] = {0.2f, 0.1f, 0.05f};
  double hair_line = -0.45;  // hair covers y < hair_line inside the head
  double eye_dx = 0.35, eye_y = -0.15, eye_r = 0.14;
  float eye[3] = {0.1f, 0.1f, 0.3f};
  double mouth_y = 0.45, mouth_w = 0.45, mouth_h = 0.08;
  float mouth[3] = {0.6f, 0.1f, 0.1f};
  double mark_x = 0.5, mark_y = 0.2, mark_r = 0.09;  // asymmetric cheek mark
  float mark[3] = {0.3f, 0.2f, 0.1f};
};

struct SyntheticIdentity {
  int id = 0;
  FaceGeometry geometry;
};

/// Deterministic function of (seed, id).
SyntheticIdentity make_identity(std::uint64_t seed, int id);

struct Nuisance {
  double angle = 0;  // radians, counter-clockwise in image coordinates
  double scale = 1;
  double tx = 0, ty = 0;  // pixels, face centre offset from the tile centre
  double brightness = 1;
  std::uint64_t clutter_seed = 0;
};

struct NuisanceRanges {
  double max_rotation_deg = 30;
  double scale_min = 0.7, scale_max = 1.3;
  double max_translate = 0.15;  // fraction of the tile side
  double brightness = 0.15;
  int clutter = 3;
};

Nuisance sample_nuisance(std::mt19937_64& rng, const NuisanceRanges& r, int tile);

/// Nominal head half-height at scale 1 for a tile of the given side.
inline double head_half_height(int tile) { return 0.25 * tile; }

/// Tight box of the rotated, scaled head ellipse.
BBox face_box(const FaceGeometry& g, const Nuisance& n, int tile);

/// Renders one face over a cluttered background, 2x2 supersampled. Throws
/// InputError if the face box leaves the tile.
Tile synth_face(const SyntheticIdentity& identity, const Nuisance& nuisance, int tile,
                int clutter = 3);

/// Samples nuisances from rng until the face fits (at most 16 tries).
Tile synth_face_fitted(const SyntheticIdentity& identity, std::mt19937_64& rng,
                       const NuisanceRanges& ranges, int tile);

// ---- splits -----------------------------------------------------------------

struct FaceRef {
  int identity = 0;
  int instance = 0;
};

struct PairRef {
  FaceRef a, b;
  bool same = false;
};

struct SplitConfig {
  int train_identities = 20;
  int per_identity = 30;
  int verify_identities = 10;
  int verify_per_identity = 20;
  int calib_pairs = 200;
  int test_pairs = 200;
};

/// Train identities are 0..train_identities-1 (also their class index);
/// verification identities follow them. Calibration pairs use the first
/// half of each verification identity's instances, test pairs the second.
struct Split {
  std::vector<FaceRef> train;
  std::vector<int> verify_identities;
  std::vector<PairRef> calib_pairs;
  std::vector<PairRef> test_pairs;
};

Split make_split(const SplitConfig& cfg, std::uint64_t seed);

/// Synthetic world shared by all sources: everything is a pure function of
/// the seed and the requested indices.
struct SyntheticWorld {
  std::uint64_t seed = 1;
  NuisanceRanges nuisance;
  StitchLayout layout{3, 4, 64};

  Tile instance(const FaceRef& ref) const;
  /// Face-only tile for held-out detection evaluation; identities outside
  /// the training range.
  Tile detection_tile(int index) const;
};

/// Detection-only stitched samples of anonymous faces (no identity labels).
class DetectionSource : public SampleSource {
 public:
  explicit DetectionSource(SyntheticWorld world) : world_(std::move(world)) {}
  Sample sample(std::uint64_t iter, int k) const override;

 private:
  SyntheticWorld world_;
};

/// Stitched samples of labelled training instances.
class IdentitySource : public SampleSource {
 public:
  IdentitySource(SyntheticWorld world, std::vector<FaceRef> pool)
      : world_(std::move(world)), pool_(std::move(pool)) {}
  Sample sample(std::uint64_t iter, int k) const override;

 private:
  SyntheticWorld world_;
  std::vector<FaceRef> pool_;
};

/// [3,H,W] -> [1,3,H,W] copy.
Tensor as_batch(const Tensor& image);

// ---- annotation files -------------------------------------------------------

struct Annotation {
  std::string path;
  std::vector<BBox> boxes;
  std::vector<int> identities;  // -1 where absent
};

struct AnnotationSet {
  std::vector<Annotation> images;
  int skipped = 0;  // boxes dropped for non-positive width or height
};

/// Per image: a path line, a count line, then count lines "x1 y1 w h
/// [identity]". Throws ParseError with the offending line number.
AnnotationSet load_annotations(const std::filesystem::path& path);
AnnotationSet parse_annotations(std::istream& is);

}  // namespace stnface
