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

#include "stnface/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace stnface {

// ---- stitched batches -------------------------------------------------------

Sample stitch_batch(const std::vector<Tile>& tiles, const StitchLayout& layout) {
  if (static_cast<int>(tiles.size()) != layout.count()) {
    throw InputError("stitch_batch needs " + std::to_string(layout.count()) + " tiles, got " +
                     std::to_string(tiles.size()));
  }
  const int T = layout.tile, H = layout.height(), W = layout.width();
  Sample s;
  s.image = Tensor({1, 3, H, W});
  for (int t = 0; t < layout.count(); ++t) {
    const Tile& tile = tiles[t];
    if (tile.image.shape() != Shape{3, T, T}) {
      throw InputError("tile " + std::to_string(t) + " has shape " +
                       shape_str(tile.image.shape()) + ", expected [3," + std::to_string(T) +
                       "," + std::to_string(T) + "]");
    }
    if (tile.identities.size() != tile.boxes.size()) {
      throw InputError("tile " + std::to_string(t) + ": boxes and identities differ in count");
    }
    const int row = t / layout.cols, col = t % layout.cols;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < T; ++y) {
        const float* src = tile.image.ptr() + (static_cast<std::size_t>(c) * T + y) * T;
        float* dst = &s.image.at(0, c, row * T + y, col * T);
        std::copy(src, src + T, dst);
      }
    }
    const double ox = static_cast<double>(col) * T, oy = static_cast<double>(row) * T;
    for (std::size_t b = 0; b < tile.boxes.size(); ++b) {
      BBox box = tile.boxes[b];
      box.x1 += ox;
      box.x2 += ox;
      box.y1 += oy;
      box.y2 += oy;
      s.boxes.push_back(box);
      s.identities.push_back(tile.identities[b]);
    }
  }
  return s;
}

std::vector<Tile> unstitch_boxes(const Sample& sample, const StitchLayout& layout) {
  std::vector<Tile> cells(static_cast<std::size_t>(layout.count()));
  const double T = layout.tile;
  for (std::size_t b = 0; b < sample.boxes.size(); ++b) {
    BBox box = sample.boxes[b];
    const int col = std::clamp(static_cast<int>(std::floor(box.cx() / T)), 0, layout.cols - 1);
    const int row = std::clamp(static_cast<int>(std::floor(box.cy() / T)), 0, layout.rows - 1);
    box.x1 -= col * T;
    box.x2 -= col * T;
    box.y1 -= row * T;
    box.y2 -= row * T;
    auto& cell = cells[static_cast<std::size_t>(row * layout.cols + col)];
    cell.boxes.push_back(box);
    cell.identities.push_back(b < sample.identities.size() ? sample.identities[b] : -1);
  }
  return cells;
}

// ---- synthetic faces --------------------------------------------------------

namespace {

void hsv(double h, double s, double v, float out[3]) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh);
  const double f = hh - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r, g, b;
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
  out[0] = static_cast<float>(r);
  out[1] = static_cast<float>(g);
  out[2] = static_cast<float>(b);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Colour of the face pattern at face-local unit coordinates, or nullptr
// outside the head.
const float* face_color(const FaceGeometry& g, double ux, double uy) {
  const double ex = ux / g.aspect;
  if (ex * ex + uy * uy > 1.0) return nullptr;
  auto in_circle = [](double x, double y, double cx, double cy, double r) {
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  };
  if (in_circle(ux, uy, -g.eye_dx, g.eye_y, g.eye_r) ||
      in_circle(ux, uy, g.eye_dx, g.eye_y, g.eye_r)) {
    return g.eye;
  }
  if (std::abs(ux) <= 0.5 * g.mouth_w && std::abs(uy - g.mouth_y) <= 0.5 * g.mouth_h) {
    return g.mouth;
  }
  if (in_circle(ux, uy, g.mark_x, g.mark_y, g.mark_r)) return g.mark;
  if (uy < g.hair_line) return g.hair;
  return g.skin;
}

}  // namespace

SyntheticIdentity make_identity(std::uint64_t seed, int id) {
  std::mt19937_64 rng(mix_seed(mix_seed(seed, 0x1D), static_cast<std::uint64_t>(id)));
  SyntheticIdentity s;
  s.id = id;
  FaceGeometry& g = s.geometry;
  g.aspect = uniform(rng, 0.68, 0.95);
  hsv(uniform(rng, 0, 1), uniform(rng, 0.25, 0.75), uniform(rng, 0.6, 0.95), g.skin);
  hsv(uniform(rng, 0, 1), uniform(rng, 0.3, 0.9), uniform(rng, 0.1, 0.55), g.hair);
  g.hair_line = uniform(rng, -0.75, -0.25);
  g.eye_dx = uniform(rng, 0.22, 0.45);
  g.eye_y = uniform(rng, -0.3, -0.02);
  g.eye_r = uniform(rng, 0.09, 0.18);
  hsv(uniform(rng, 0, 1), uniform(rng, 0.5, 1.0), uniform(rng, 0.05, 0.45), g.eye);
  g.mouth_y = uniform(rng, 0.3, 0.6);
  g.mouth_w = uniform(rng, 0.25, 0.75);
  g.mouth_h = uniform(rng, 0.06, 0.16);
  hsv(uniform(rng, 0, 1), uniform(rng, 0.5, 1.0), uniform(rng, 0.3, 0.8), g.mouth);
  g.mark_x = (rng() & 1 ? 1.0 : -1.0) * uniform(rng, 0.3, 0.55);
  g.mark_y = uniform(rng, 0.05, 0.3);
  g.mark_r = uniform(rng, 0.06, 0.12);
  hsv(uniform(rng, 0, 1), uniform(rng, 0.4, 1.0), uniform(rng, 0.1, 0.9), g.mark);
  return s;
}

Nuisance sample_nuisance(std::mt19937_64& rng, const NuisanceRanges& r, int tile) {
  Nuisance n;
  const double a = r.max_rotation_deg * std::numbers::pi / 180.0;
  n.angle = uniform(rng, -a, a);
  n.scale = uniform(rng, r.scale_min, r.scale_max);
  const double t = r.max_translate * tile;
  n.tx = uniform(rng, -t, t);
  n.ty = uniform(rng, -t, t);
  n.brightness = uniform(rng, 1 - r.brightness, 1 + r.brightness);
  n.clutter_seed = rng();
  return n;
}

BBox face_box(const FaceGeometry& g, const Nuisance& n, int tile) {
  const double b = head_half_height(tile) * n.scale, a = g.aspect * b;
  const double c = std::cos(n.angle), s = std::sin(n.angle);
  const double hx = std::sqrt(a * a * c * c + b * b * s * s);
  const double hy = std::sqrt(a * a * s * s + b * b * c * c);
  const double cx = 0.5 * tile + n.tx, cy = 0.5 * tile + n.ty;
  return {cx - hx, cy - hy, cx + hx, cy + hy};
}

Tile synth_face(const SyntheticIdentity& identity, const Nuisance& n, int tile, int clutter) {
  const FaceGeometry& g = identity.geometry;
  const BBox box = face_box(g, n, tile);
  if (box.x1 < 0 || box.y1 < 0 || box.x2 > tile || box.y2 > tile) {
    throw InputError("face of identity " + std::to_string(identity.id) + " leaves the tile");
  }
  const int T = tile;
  const std::size_t plane = static_cast<std::size_t>(T) * T;
  Tile out;
  out.image = Tensor({3, T, T});
  float* img = out.image.ptr();

  // Background: two-colour linear gradient, axis-aligned clutter, noise.
  std::mt19937_64 rng(n.clutter_seed);
  float c0[3], c1[3];
  hsv(uniform(rng, 0, 1), uniform(rng, 0, 0.6), uniform(rng, 0.2, 0.9), c0);
  hsv(uniform(rng, 0, 1), uniform(rng, 0, 0.6), uniform(rng, 0.2, 0.9), c1);
  const double dir = uniform(rng, 0, 2 * std::numbers::pi);
  const double gx = std::cos(dir) / T, gy = std::sin(dir) / T;
  for (int y = 0; y < T; ++y) {
    for (int x = 0; x < T; ++x) {
      const double t = std::clamp(0.5 + (x - 0.5 * T) * gx + (y - 0.5 * T) * gy, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        img[c * plane + y * T + x] = static_cast<float>((1 - t) * c0[c] + t * c1[c]);
      }
    }
  }
  for (int k = 0; k < clutter; ++k) {
    float col[3];
    hsv(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0.1, 1), col);
    const int w = static_cast<int>(uniform(rng, 3, T / 4.0));
    const int h = static_cast<int>(uniform(rng, 3, T / 4.0));
    const int x0 = static_cast<int>(uniform(rng, 0, T - w));
    const int y0 = static_cast<int>(uniform(rng, 0, T - h));
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        for (int c = 0; c < 3; ++c) img[c * plane + y * T + x] = col[c];
      }
    }
  }
  std::uniform_real_distribution<float> noise(-0.04f, 0.04f);
  for (std::size_t i = 0; i < 3 * plane; ++i) img[i] += noise(rng);

  // Face, composited per 2x2 subsample over the background.
  const double ry = head_half_height(T) * n.scale;
  const double cx = 0.5 * T + n.tx, cy = 0.5 * T + n.ty;
  const double cs = std::cos(n.angle), sn = std::sin(n.angle);
  const int x_lo = std::max(0, static_cast<int>(std::floor(box.x1)));
  const int x_hi = std::min(T, static_cast<int>(std::ceil(box.x2)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(box.y1)));
  const int y_hi = std::min(T, static_cast<int>(std::ceil(box.y2)));
  const float bright = static_cast<float>(n.brightness);
  for (int y = y_lo; y < y_hi; ++y) {
    for (int x = x_lo; x < x_hi; ++x) {
      float acc[3] = {0, 0, 0};
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double dx = x + 0.25 + 0.5 * sx - cx, dy = y + 0.25 + 0.5 * sy - cy;
          const double ux = (cs * dx + sn * dy) / ry, uy = (-sn * dx + cs * dy) / ry;
          const float* col = face_color(g, ux, uy);
          if (!col) continue;
          ++hits;
          for (int c = 0; c < 3; ++c) acc[c] += std::min(1.0f, col[c] * bright);
        }
      }
      if (hits == 0) continue;
      for (int c = 0; c < 3; ++c) {
        float& p = img[c * plane + y * T + x];
        p = (acc[c] + (4 - hits) * p) / 4.0f;
      }
    }
  }
  for (std::size_t i = 0; i < 3 * plane; ++i) img[i] = std::clamp(img[i], 0.0f, 1.0f);
  out.boxes.push_back(box);
  out.identities.push_back(identity.id);
  return out;
}

Tile synth_face_fitted(const SyntheticIdentity& identity, std::mt19937_64& rng,
                       const NuisanceRanges& ranges, int tile) {
  for (int attempt = 0; attempt < 16; ++attempt) {
    const Nuisance n = sample_nuisance(rng, ranges, tile);
    const BBox b = face_box(identity.geometry, n, tile);
    if (b.x1 >= 0 && b.y1 >= 0 && b.x2 <= tile && b.y2 <= tile) {
      return synth_face(identity, n, tile, ranges.clutter);
    }
  }
  throw InputError("could not fit a face of identity " + std::to_string(identity.id) +
                   " into a " + std::to_string(tile) + "px tile");
}

// ---- splits -----------------------------------------------------------------

namespace {

std::vector<PairRef> draw_pairs(const std::vector<int>& ids, int inst_lo, int inst_hi, int count,
                                std::mt19937_64& rng) {
  std::vector<PairRef> pairs;
  std::set<std::tuple<int, int, int, int>> seen;
  const int same_target = count / 2;
  std::uniform_int_distribution<int> pick_id(0, static_cast<int>(ids.size()) - 1);
  std::uniform_int_distribution<int> pick_inst(inst_lo, inst_hi - 1);
  const long max_attempts = 1000L * std::max(count, 1);
  long attempts = 0;
  auto add = [&](bool same) {
    while (attempts++ < max_attempts) {
      FaceRef a{ids[pick_id(rng)], pick_inst(rng)};
      FaceRef b{same ? a.identity : ids[pick_id(rng)], pick_inst(rng)};
      if (same ? a.instance == b.instance : a.identity == b.identity) continue;
      if (std::tie(b.identity, b.instance) < std::tie(a.identity, a.instance)) std::swap(a, b);
      if (!seen.insert({a.identity, a.instance, b.identity, b.instance}).second) continue;
      pairs.push_back({a, b, same});
      return;
    }
    throw InputError("not enough verification identities/instances for " +
                     std::to_string(count) + " distinct pairs");
  };
  for (int i = 0; i < same_target; ++i) add(true);
  for (int i = same_target; i < count; ++i) add(false);
  return pairs;
}

}  // namespace

Split make_split(const SplitConfig& cfg, std::uint64_t seed) {
  if (cfg.train_identities < 1 || cfg.per_identity < 1) {
    throw InputError("need at least one training identity and instance");
  }
  if (cfg.verify_identities < 2) throw InputError("need at least two verification identities");
  if (cfg.verify_per_identity < 4) {
    throw InputError("need at least four instances per verification identity");
  }
  Split s;
  for (int id = 0; id < cfg.train_identities; ++id) {
    for (int i = 0; i < cfg.per_identity; ++i) s.train.push_back({id, i});
  }
  for (int k = 0; k < cfg.verify_identities; ++k) {
    s.verify_identities.push_back(cfg.train_identities + k);
  }
  std::mt19937_64 rng(mix_seed(seed, 0x5B));
  const int half = cfg.verify_per_identity / 2;
  s.calib_pairs = draw_pairs(s.verify_identities, 0, half, cfg.calib_pairs, rng);
  s.test_pairs = draw_pairs(s.verify_identities, half, cfg.verify_per_identity, cfg.test_pairs, rng);
  return s;
}

Tile SyntheticWorld::instance(const FaceRef& ref) const {
  std::mt19937_64 rng(mix_seed(mix_seed(mix_seed(seed, 0x1A), static_cast<std::uint64_t>(ref.identity)),
                               static_cast<std::uint64_t>(ref.instance)));
  return synth_face_fitted(make_identity(seed, ref.identity), rng, nuisance, layout.tile);
}

Tile SyntheticWorld::detection_tile(int index) const {
  std::mt19937_64 rng(mix_seed(mix_seed(seed, 0xE1), static_cast<std::uint64_t>(index)));
  Tile t = synth_face_fitted(make_identity(seed, 2000000 + index), rng, nuisance, layout.tile);
  std::fill(t.identities.begin(), t.identities.end(), -1);
  return t;
}

Sample DetectionSource::sample(std::uint64_t iter, int k) const {
  std::mt19937_64 rng(
      mix_seed(mix_seed(mix_seed(world_.seed, 0xD1), iter), static_cast<std::uint64_t>(k)));
  std::vector<Tile> tiles;
  for (int t = 0; t < world_.layout.count(); ++t) {
    const int id = 1000000 + static_cast<int>(rng() % 1000000);
    Tile tile = synth_face_fitted(make_identity(world_.seed, id), rng, world_.nuisance,
                                  world_.layout.tile);
    std::fill(tile.identities.begin(), tile.identities.end(), -1);
    tiles.push_back(std::move(tile));
  }
  return stitch_batch(tiles, world_.layout);
}

Sample IdentitySource::sample(std::uint64_t iter, int k) const {
  if (pool_.empty()) throw InputError("identity source has no instances");
  std::mt19937_64 rng(
      mix_seed(mix_seed(mix_seed(world_.seed, 0xC1), iter), static_cast<std::uint64_t>(k)));
  std::vector<Tile> tiles;
  for (int t = 0; t < world_.layout.count(); ++t) {
    tiles.push_back(world_.instance(pool_[rng() % pool_.size()]));
  }
  return stitch_batch(tiles, world_.layout);
}

Tensor as_batch(const Tensor& image) {
  require_rank(image.shape(), 3, "as_batch");
  return image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
}

// ---- annotation files -------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

AnnotationSet parse_annotations(std::istream& is) {
  AnnotationSet set;
  std::string line;
  int lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++lineno;
    line = trim(line);
    return true;
  };
  while (next()) {
    if (line.empty()) continue;
    Annotation a;
    a.path = line;
    if (!next()) throw ParseError(lineno + 1, "missing box count for " + a.path);
    long count = -1;
    {
      std::istringstream ss(line);
      std::string extra;
      if (!(ss >> count) || count < 0 || (ss >> extra)) {
        throw ParseError(lineno, "expected a non-negative box count, got '" + line + "'");
      }
    }
    for (long i = 0; i < count; ++i) {
      if (!next()) throw ParseError(lineno + 1, "missing box line for " + a.path);
      std::istringstream ss(line);
      double x, y, w, h;
      if (!(ss >> x >> y >> w >> h)) {
        throw ParseError(lineno, "expected 'x1 y1 w h [identity]', got '" + line + "'");
      }
      int identity = -1;
      std::string tok;
      if (ss >> tok) {
        std::size_t used = 0;
        try {
          identity = std::stoi(tok, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != tok.size() || identity < -1) {
          throw ParseError(lineno, "bad identity '" + tok + "'");
        }
        if (ss >> tok) throw ParseError(lineno, "trailing text '" + tok + "'");
      }
      if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h)) {
        throw ParseError(lineno, "non-finite coordinate");
      }
      if (w <= 0 || h <= 0) {
        ++set.skipped;
        continue;
      }
      a.boxes.push_back({x, y, x + w, y + h});
      a.identities.push_back(identity);
    }
    set.images.push_back(std::move(a));
  }
  return set;
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot read annotations " + path.string());
  return parse_annotations(is);
}

}  // namespace stnface
