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

#include "stnface/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace stnface {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError(key, "bad value '" + v + "'");
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
std::string fmt_list(const T& xs) {
  std::string s;
  for (const auto& x : xs) {
    if (!s.empty()) s += ",";
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>) {
      s += fmt(x);
    } else {
      s += std::to_string(x);
    }
  }
  return s;
}

StnMode parse_stn(const std::string& key, const std::string& v) {
  if (v == "learned") return StnMode::kLearned;
  if (v == "identity") return StnMode::kIdentity;
  throw ConfigError(key, "expected 'learned' or 'identity', got '" + v + "'");
}
std::string fmt_stn(StnMode m) { return m == StnMode::kLearned ? "learned" : "identity"; }

struct Entry {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Ordered table of every key.
const std::vector<std::pair<std::string, Entry>>& table() {
  using C = RunConfig;
  using S = const std::string&;
#define NUM_KEY(KEY, TYPE, FIELD)                                                    \
  {KEY, Entry{[](C& c, S k, S v) { c.FIELD = parse_number<TYPE>(k, v); },             \
              [](const C& c) {                                                       \
                if constexpr (std::is_floating_point_v<TYPE>) return fmt(c.FIELD);   \
                else return std::to_string(c.FIELD);                                 \
              }}}
  static const std::vector<std::pair<std::string, Entry>> t = {
      NUM_KEY("seed", std::uint64_t, seed),
      {"out_dir", Entry{[](C& c, S, S v) { c.out_dir = v; }, [](const C& c) { return c.out_dir; }}},
      NUM_KEY("model.share_depth", int, model.share_depth),
      {"model.backbone_widths",
       Entry{[](C& c, S k, S v) {
               auto w = parse_list<int>(k, v);
               if (w.size() != c.model.backbone.widths.size()) {
                 throw ConfigError(k, "expected " + std::to_string(c.model.backbone.widths.size()) +
                                          " widths");
               }
               std::copy(w.begin(), w.end(), c.model.backbone.widths.begin());
             },
             [](const C& c) { return fmt_list(c.model.backbone.widths); }}},
      NUM_KEY("model.rpn_channels", int, model.rpn_channels),
      {"model.det_fc", Entry{[](C& c, S k, S v) { c.model.det_fc = parse_list<int>(k, v); },
                             [](const C& c) { return fmt_list(c.model.det_fc); }}},
      {"model.det_stn", Entry{[](C& c, S k, S v) { c.model.det_stn = parse_stn(k, v); },
                              [](const C& c) { return fmt_stn(c.model.det_stn); }}},
      NUM_KEY("model.stn_lr_mult", double, model.stn_lr_mult),
      {"model.recog_stn", Entry{[](C& c, S k, S v) { c.model.recog_stn = parse_stn(k, v); },
                                [](const C& c) { return fmt_stn(c.model.recog_stn); }}},
      {"model.res_widths", Entry{[](C& c, S k, S v) { c.model.res_widths = parse_list<int>(k, v); },
                                 [](const C& c) { return fmt_list(c.model.res_widths); }}},
      NUM_KEY("model.embed_dim", int, model.embed_dim),
      {"model.box_loss",
       Entry{[](C& c, S k, S v) {
               if (v == "l2") c.model.box_loss = RegressionLoss::kL2;
               else if (v == "smooth_l1") c.model.box_loss = RegressionLoss::kSmoothL1;
               else throw ConfigError(k, "expected 'l2' or 'smooth_l1', got '" + v + "'");
             },
             [](const C& c) {
               return std::string(c.model.box_loss == RegressionLoss::kL2 ? "l2" : "smooth_l1");
             }}},
      {"model.bbox_std",
       Entry{[](C& c, S k, S v) {
               auto w = parse_list<double>(k, v);
               if (w.size() != 4) throw ConfigError(k, "expected 4 values");
               std::copy(w.begin(), w.end(), c.model.bbox_std.begin());
             },
             [](const C& c) { return fmt_list(c.model.bbox_std); }}},
      {"anchors.scales", Entry{[](C& c, S k, S v) { c.model.anchors.scales = parse_list<double>(k, v); },
                               [](const C& c) { return fmt_list(c.model.anchors.scales); }}},
      {"anchors.ratios", Entry{[](C& c, S k, S v) { c.model.anchors.ratios = parse_list<double>(k, v); },
                               [](const C& c) { return fmt_list(c.model.anchors.ratios); }}},
      NUM_KEY("anchors.stride", int, model.anchors.stride),
      NUM_KEY("rpn.pos_thresh", double, model.rpn_targets.pos_thresh),
      NUM_KEY("rpn.neg_thresh", double, model.rpn_targets.neg_thresh),
      NUM_KEY("rpn.batch_size", int, model.rpn_targets.batch_size),
      NUM_KEY("rpn.pos_fraction", double, model.rpn_targets.pos_fraction),
      NUM_KEY("rpn.nms", double, model.rpn_nms),
      NUM_KEY("rpn.pre_nms_train", int, model.pre_nms_train),
      NUM_KEY("rpn.pre_nms_test", int, model.pre_nms_test),
      NUM_KEY("rpn.post_nms_train", int, model.proposals_train),
      NUM_KEY("rpn.post_nms_test", int, model.proposals_test),
      NUM_KEY("rpn.min_size", double, model.min_box_size),
      NUM_KEY("roi.batch_size", int, model.roi_targets.rois_per_image),
      NUM_KEY("roi.fg_fraction", double, model.roi_targets.fg_fraction),
      NUM_KEY("roi.fg_thresh", double, model.roi_targets.fg_thresh),
      NUM_KEY("roi.bg_thresh_hi", double, model.roi_targets.bg_thresh_hi),
      NUM_KEY("roi.bg_thresh_lo", double, model.roi_targets.bg_thresh_lo),
      NUM_KEY("det.nms", double, model.det_nms),
      NUM_KEY("center.lambda", double, model.lambda_c),
      NUM_KEY("center.alpha", double, model.alpha_c),
      NUM_KEY("solver.base_lr", double, solver.base_lr),
      NUM_KEY("solver.momentum", double, solver.momentum),
      NUM_KEY("solver.gamma", double, solver.gamma),
      NUM_KEY("solver.stepsize", int, solver.stepsize),
      NUM_KEY("solver.iter_size", int, solver.iter_size),
      NUM_KEY("solver.max_iter", std::uint64_t, solver.max_iter),
      NUM_KEY("solver.clip_norm", double, solver.clip_norm),
      NUM_KEY("solver.weight_decay", double, solver.weight_decay),
      NUM_KEY("solver.checkpoint_interval", std::uint64_t, solver.checkpoint_interval),
      NUM_KEY("schedule.joint_start", double, joint_start),
      NUM_KEY("schedule.recog_start", double, recog_start),
      NUM_KEY("loss.wider.rpn", double, wider.rpn),
      NUM_KEY("loss.wider.det", double, wider.det),
      NUM_KEY("loss.wider.recog", double, wider.recog),
      NUM_KEY("loss.casia.rpn", double, casia.rpn),
      NUM_KEY("loss.casia.det", double, casia.det),
      NUM_KEY("loss.casia.recog", double, casia.recog),
      NUM_KEY("data.train_identities", int, split.train_identities),
      NUM_KEY("data.per_identity", int, split.per_identity),
      NUM_KEY("data.verify_identities", int, split.verify_identities),
      NUM_KEY("data.verify_per_identity", int, split.verify_per_identity),
      NUM_KEY("data.calib_pairs", int, split.calib_pairs),
      NUM_KEY("data.test_pairs", int, split.test_pairs),
      NUM_KEY("data.det_test_tiles", int, det_test_tiles),
      NUM_KEY("data.tile_size", int, layout.tile),
      NUM_KEY("data.rows", int, layout.rows),
      NUM_KEY("data.cols", int, layout.cols),
      NUM_KEY("data.max_rotation", double, nuisance.max_rotation_deg),
      NUM_KEY("data.scale_min", double, nuisance.scale_min),
      NUM_KEY("data.scale_max", double, nuisance.scale_max),
      NUM_KEY("data.max_translate", double, nuisance.max_translate),
      NUM_KEY("data.brightness", double, nuisance.brightness),
      NUM_KEY("data.clutter", int, nuisance.clutter),
      NUM_KEY("eval.iou", double, eval_iou),
  };
#undef NUM_KEY
  return t;
}

const Entry& entry(const std::string& key) {
  for (const auto& [k, e] : table()) {
    if (k == key) return e;
  }
  throw ConfigError(key, "unknown configuration key");
}

}  // namespace

std::uint64_t RunConfig::data_seed() const { return mix_seed(seed, 0xDA7A); }
std::uint64_t RunConfig::init_seed() const { return mix_seed(seed, 0x1217); }
std::uint64_t RunConfig::sampling_seed() const { return mix_seed(seed, 0x5A3B); }

StageSchedule RunConfig::schedule() const {
  return default_schedule(solver.max_iter, joint_start, recog_start, wider, casia);
}

SyntheticWorld RunConfig::world() const {
  SyntheticWorld w;
  w.seed = data_seed();
  w.nuisance = nuisance;
  w.layout = layout;
  return w;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, e] : table()) out.push_back(k);
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  entry(key).set(cfg, key, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  return entry(key).get(cfg);
}

RunConfig parse_config(std::istream& is, RunConfig cfg) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(line, "line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--config", "cannot read " + path.string());
  return parse_config(is, std::move(base));
}

void echo_config(std::ostream& os, const RunConfig& cfg) {
  for (const auto& [k, e] : table()) os << k << '=' << e.get(cfg) << '\n';
}

void validate_config(const RunConfig& cfg) {
  check_share_depth(cfg.model.share_depth);
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw ConfigError(key, "must be positive");
  };
  for (int w : cfg.model.backbone.widths) positive("model.backbone_widths", w);
  for (int w : cfg.model.det_fc) positive("model.det_fc", w);
  for (int w : cfg.model.res_widths) positive("model.res_widths", w);
  for (double s : cfg.model.anchors.scales) positive("anchors.scales", s);
  for (double r : cfg.model.anchors.ratios) positive("anchors.ratios", r);
  for (double s : cfg.model.bbox_std) positive("model.bbox_std", s);
  positive("model.embed_dim", cfg.model.embed_dim);
  positive("model.rpn_channels", cfg.model.rpn_channels);
  positive("solver.stepsize", cfg.solver.stepsize);
  positive("solver.iter_size", cfg.solver.iter_size);
  if (cfg.model.stn_lr_mult < 0) throw ConfigError("model.stn_lr_mult", "must be >= 0");
  if (cfg.solver.weight_decay < 0) throw ConfigError("solver.weight_decay", "must be >= 0");
  positive("data.tile_size", cfg.layout.tile);
  positive("data.rows", cfg.layout.rows);
  positive("data.cols", cfg.layout.cols);
  const auto& t = cfg.model.rpn_targets;
  if (!(0 < t.neg_thresh && t.neg_thresh <= t.pos_thresh && t.pos_thresh < 1)) {
    throw ConfigError("rpn.pos_thresh", "need 0 < neg_thresh <= pos_thresh < 1");
  }
  if (!(0 <= cfg.joint_start && cfg.joint_start <= cfg.recog_start && cfg.recog_start <= 1)) {
    throw ConfigError("schedule.joint_start", "need 0 <= joint_start <= recog_start <= 1");
  }
  if (cfg.nuisance.scale_min > cfg.nuisance.scale_max) {
    throw ConfigError("data.scale_min", "exceeds data.scale_max");
  }
  for (const auto* w : {&cfg.wider, &cfg.casia}) {
    if (w->rpn < 0 || w->det < 0 || w->recog < 0) {
      throw ConfigError(w == &cfg.wider ? "loss.wider" : "loss.casia", "weights must be >= 0");
    }
  }
}

}  // namespace stnface
