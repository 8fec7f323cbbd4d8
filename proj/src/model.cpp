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

#include "stnface/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stnface {

RpnHead::RpnHead(int in_channels, int mid_channels, int anchors_per_location)
    : A_(anchors_per_location),
      conv_("rpn.conv", in_channels, mid_channels, 3, 1, 1),
      cls_("rpn.cls", mid_channels, 2 * anchors_per_location, 1, 1, 0),
      reg_("rpn.reg", mid_channels, 4 * anchors_per_location, 1, 1, 0) {}

RpnHead::Output RpnHead::forward(const Tensor& feat) {
  auto h = relu_.forward(conv_.forward(feat));
  auto c = cls_.forward(h);
  auto r = reg_.forward(h);
  map_shape_ = h.shape();
  const int H = h.dim(2), W = h.dim(3), HW = H * W;
  Output out{Tensor({HW * A_, 2}), Tensor({HW * A_, 4})};
  for (int p = 0; p < HW; ++p) {
    for (int a = 0; a < A_; ++a) {
      const int idx = p * A_ + a;
      for (int k = 0; k < 2; ++k) out.logits.at(idx, k) = c[(2 * a + k) * HW + p];
      for (int k = 0; k < 4; ++k) out.deltas.at(idx, k) = r[(4 * a + k) * HW + p];
    }
  }
  return out;
}

Tensor RpnHead::backward(const Tensor& grad_logits, const Tensor& grad_deltas,
                         bool need_input_grad) {
  const int H = map_shape_[2], W = map_shape_[3], HW = H * W;
  Tensor gc({1, 2 * A_, H, W}), gr({1, 4 * A_, H, W});
  for (int p = 0; p < HW; ++p) {
    for (int a = 0; a < A_; ++a) {
      const int idx = p * A_ + a;
      for (int k = 0; k < 2; ++k) gc[(2 * a + k) * HW + p] = grad_logits.at(idx, k);
      for (int k = 0; k < 4; ++k) gr[(4 * a + k) * HW + p] = grad_deltas.at(idx, k);
    }
  }
  auto gh = cls_.backward(gc);
  auto ghr = reg_.backward(gr);
  for (std::size_t i = 0; i < gh.numel(); ++i) gh[i] += ghr[i];
  return conv_.backward(relu_.backward(gh), need_input_grad);
}

void RpnHead::init(std::mt19937_64& rng) {
  conv_.init(rng);
  cls_.init(rng);
  reg_.init(rng);
}

void RpnHead::collect(ParamRefs<float>& out) {
  conv_.collect(out);
  cls_.collect(out);
  reg_.collect(out);
}

bool name_in_groups(const std::string& name, const std::vector<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [&](const std::string& p) { return name.starts_with(p); });
}

namespace {

SNetConfig snet_config(const ModelConfig& cfg) {
  SNetConfig s;
  s.share_depth = cfg.share_depth;
  s.backbone = cfg.backbone;
  s.res_widths = cfg.res_widths;
  s.embed_dim = cfg.embed_dim;
  return s;
}

DetectionHeadConfig det_config(const ModelConfig& cfg) {
  DetectionHeadConfig d;
  d.channels = cfg.backbone.channels_at(kBackboneBlocks);
  d.roi_size = 7;
  d.fc_widths = cfg.det_fc;
  d.stn = cfg.det_stn;
  return d;
}

const std::vector<std::string> kBackboneGroup{"mnet."};
const std::vector<std::string> kRpnGroup{"rpn."};
const std::vector<std::string> kDetHeadGroups{"dstn.", "det."};

}  // namespace

FaceModel::FaceModel(const ModelConfig& cfg)
    : cfg_(cfg),
      backbone_(cfg.backbone),
      rpn_(cfg.backbone.channels_at(kBackboneBlocks), cfg.rpn_channels,
           cfg.anchors.per_location()),
      det_(det_config(cfg)),
      rstn_("rstn", cfg.backbone.channels_at(cfg.share_depth), snet_input_size(cfg.share_depth),
            cfg.recog_stn),
      snet_(snet_config(cfg)),
      cls_("recog.cls", cfg.embed_dim, cfg.num_identities),
      centers_(cfg.num_identities, cfg.embed_dim) {
  if (cfg.anchors.stride != feature_stride(kBackboneBlocks)) {
    throw ConfigError("anchors.stride", "must equal the backbone stride " +
                                            std::to_string(feature_stride(kBackboneBlocks)));
  }
  backbone_.collect(params_);
  rpn_.collect(params_);
  det_.collect(params_);
  rstn_.collect(params_);
  snet_.collect(params_);
  cls_.collect(params_);
  check_unique_names(params_);
  for (auto* p : params_) {
    if (p->name.starts_with("dstn.") || p->name.starts_with("rstn.")) p->lr_mult = cfg.stn_lr_mult;
  }
}

void FaceModel::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  backbone_.init(rng);
  rpn_.init(rng);
  det_.init(rng);
  rstn_.init(rng);
  snet_.init(rng);
  cls_.init(rng);
  centers_.centers.fill(0.0f);
  for (auto* p : params_) p->value.drop_grad();
}

BasicParam<float>* FaceModel::find_param(const std::string& name) {
  for (auto* p : params_) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void FaceModel::set_frozen(const std::vector<std::string>& prefixes, bool frozen) {
  for (auto* p : params_) {
    if (name_in_groups(p->name, prefixes)) p->frozen = frozen;
  }
}

bool FaceModel::any_trainable(const std::vector<std::string>& prefixes) const {
  return std::any_of(params_.begin(), params_.end(), [&](const BasicParam<float>* p) {
    return !p->frozen && name_in_groups(p->name, prefixes);
  });
}

std::vector<BBox> FaceModel::propose(const RpnHead::Output& rpn,
                                     const std::vector<BBox>& anchors, double img_w,
                                     double img_h, bool training) const {
  const int n = static_cast<int>(anchors.size());
  auto probs = softmax_forward(rpn.logits);
  std::vector<BBox> cand;
  cand.reserve(anchors.size());
  for (int i = 0; i < n; ++i) {
    const BoxDelta d{rpn.deltas.at(i, 0), rpn.deltas.at(i, 1), rpn.deltas.at(i, 2),
                     rpn.deltas.at(i, 3)};
    BBox b = clip_box(decode_box(d, anchors[i]), img_w, img_h);
    if (b.width() < cfg_.min_box_size || b.height() < cfg_.min_box_size) continue;
    b.score = probs.at(i, 1);
    cand.push_back(b);
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const BBox& a, const BBox& b) { return *a.score > *b.score; });
  const auto pre = static_cast<std::size_t>(training ? cfg_.pre_nms_train : cfg_.pre_nms_test);
  if (cand.size() > pre) cand.resize(pre);
  const auto keep = nms(cand, cfg_.rpn_nms);
  const auto post =
      static_cast<std::size_t>(training ? cfg_.proposals_train : cfg_.proposals_test);
  std::vector<BBox> out;
  for (std::size_t i = 0; i < keep.size() && i < post; ++i) out.push_back(cand[keep[i]]);
  return out;
}

PassLosses FaceModel::train_pass(const Sample& sample, const BranchWeights& w,
                                 double grad_scale, std::mt19937_64& rng) {
  PassLosses losses;
  const auto& feats = backbone_.forward(sample.image);
  const double img_h = sample.image.dim(2), img_w = sample.image.dim(3);
  const bool backbone_trainable = any_trainable(kBackboneGroup);
  std::array<Tensor, kBackboneBlocks + 1> feat_grads;
  auto add_grad = [&](int level, Tensor g) {
    if (feat_grads[level].empty()) {
      feat_grads[level] = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) feat_grads[level][i] += g[i];
    }
  };

  const Tensor& top = feats[kBackboneBlocks];
  if (w.rpn > 0 || w.det > 0) {
    const auto anchors = generate_anchors(cfg_.anchors, top.dim(2), top.dim(3));
    auto rpn_out = rpn_.forward(top);

    if (w.rpn > 0) {
      auto t = assign_rpn_targets(anchors, sample.boxes, cfg_.rpn_targets, rng);
      std::vector<int> sel, labels, pos;
      for (int i = 0; i < static_cast<int>(t.labels.size()); ++i) {
        if (t.labels[i] < 0) continue;
        sel.push_back(i);
        labels.push_back(t.labels[i]);
        if (t.labels[i] == 1) pos.push_back(i);
      }
      const double scale = w.rpn * grad_scale;
      Tensor g_logits(rpn_out.logits.shape()), g_deltas(rpn_out.deltas.shape());
      if (!sel.empty()) {
        Tensor lg({static_cast<int>(sel.size()), 2});
        for (std::size_t j = 0; j < sel.size(); ++j) {
          lg.at(static_cast<int>(j), 0) = rpn_out.logits.at(sel[j], 0);
          lg.at(static_cast<int>(j), 1) = rpn_out.logits.at(sel[j], 1);
        }
        auto cls = softmax_xent_loss(lg, labels);
        losses.rpn += cls.loss;
        for (std::size_t j = 0; j < sel.size(); ++j) {
          for (int k = 0; k < 2; ++k) {
            g_logits.at(sel[j], k) =
                static_cast<float>(scale * cls.grad.at(static_cast<int>(j), k));
          }
        }
      }
      if (!pos.empty()) {
        const int np = static_cast<int>(pos.size());
        Tensor pred({np, 4}), target({np, 4});
        for (int j = 0; j < np; ++j) {
          const auto& d = t.deltas[pos[j]];
          const double tv[4] = {d.dx, d.dy, d.dw, d.dh};
          for (int k = 0; k < 4; ++k) {
            pred.at(j, k) = rpn_out.deltas.at(pos[j], k);
            target.at(j, k) = static_cast<float>(tv[k]);
          }
        }
        auto reg = regression_loss(pred, target, cfg_.box_loss);
        losses.rpn += reg.loss;
        for (int j = 0; j < np; ++j) {
          for (int k = 0; k < 4; ++k) {
            g_deltas.at(pos[j], k) = static_cast<float>(scale * reg.grad.at(j, k));
          }
        }
      }
      if (any_trainable(kRpnGroup) || backbone_trainable) {
        auto g = rpn_.backward(g_logits, g_deltas, backbone_trainable);
        if (backbone_trainable) add_grad(kBackboneBlocks, std::move(g));
      }
    }

    if (w.det > 0) {
      auto proposals = propose(rpn_out, anchors, img_w, img_h, true);
      auto rois = sample_rois(proposals, sample.boxes, cfg_.roi_targets, rng);
      if (!rois.rois.empty()) {
        const double scale = w.det * grad_scale;
        det_pool_ = roi_pool_forward(top, std::span<const BBox>(rois.rois),
                                     1.0 / feature_stride(kBackboneBlocks), Size2{7, 7});
        auto out = det_.forward(det_pool_.output);
        auto cls = softmax_xent_loss(out.scores, rois.labels);
        losses.det += cls.loss;
        Tensor g_scores = std::move(cls.grad);
        for (auto& v : g_scores.data()) v = static_cast<float>(v * scale);
        Tensor g_deltas(out.deltas.shape());
        std::vector<int> fg;
        for (int i = 0; i < static_cast<int>(rois.labels.size()); ++i) {
          if (rois.labels[i] == 1) fg.push_back(i);
        }
        if (!fg.empty()) {
          const int nf = static_cast<int>(fg.size());
          Tensor pred({nf, 4}), target({nf, 4});
          for (int j = 0; j < nf; ++j) {
            const auto& d = rois.deltas[fg[j]];
            const double tv[4] = {d.dx, d.dy, d.dw, d.dh};
            for (int k = 0; k < 4; ++k) {
              pred.at(j, k) = out.deltas.at(fg[j], k);
              target.at(j, k) = static_cast<float>(tv[k] / cfg_.bbox_std[k]);
            }
          }
          auto reg = regression_loss(pred, target, cfg_.box_loss);
          losses.det += reg.loss;
          for (int j = 0; j < nf; ++j) {
            for (int k = 0; k < 4; ++k) {
              g_deltas.at(fg[j], k) = static_cast<float>(scale * reg.grad.at(j, k));
            }
          }
        }
        if (any_trainable(kDetHeadGroups) || backbone_trainable) {
          auto gp = det_.backward(g_scores, g_deltas);
          if (backbone_trainable) {
            add_grad(kBackboneBlocks,
                     roi_pool_backward(gp, std::span<const std::int64_t>(det_pool_.argmax),
                                       top.shape()));
          }
        }
      }
    }
  }

  std::vector<BBox> faces;
  std::vector<int> ids;
  for (std::size_t i = 0; i < sample.boxes.size(); ++i) {
    if (i < sample.identities.size() && sample.identities[i] >= 0) {
      faces.push_back(sample.boxes[i]);
      ids.push_back(sample.identities[i]);
    }
  }
  if (w.recog > 0 && !faces.empty()) {
    const int k = cfg_.share_depth;
    const int s = snet_input_size(k);
    const Tensor& level = feats[k];
    rec_pool_ = roi_pool_forward(level, std::span<const BBox>(faces), 1.0 / feature_stride(k),
                                 Size2{s, s});
    auto aligned = rstn_.forward(rec_pool_.output);
    auto emb = snet_.forward(aligned);
    auto logits = cls_.forward(emb);
    auto sm = softmax_xent_loss(logits, ids);
    auto cl = center_loss(emb, ids, centers_, cfg_.lambda_c);
    losses.softmax = sm.loss;
    losses.center = cl.loss;
    const double scale = w.recog * grad_scale;
    for (auto& v : sm.grad.data()) v = static_cast<float>(v * scale);
    auto g_emb = cls_.backward(sm.grad);
    for (std::size_t i = 0; i < g_emb.numel(); ++i) {
      g_emb[i] += static_cast<float>(scale * cl.grad[i]);
    }
    const bool to_shared = backbone_trainable && k > 0;
    const bool stn_trainable = any_trainable({"rstn."});
    auto g_aligned = snet_.backward(g_emb, stn_trainable || to_shared);
    if (stn_trainable || to_shared) {
      auto g_pooled = rstn_.backward(g_aligned);
      if (to_shared) {
        add_grad(k, roi_pool_backward(g_pooled,
                                      std::span<const std::int64_t>(rec_pool_.argmax),
                                      level.shape()));
      }
    }
    update_centers(centers_, emb, ids, cfg_.alpha_c);
  }

  if (backbone_trainable) backbone_.backward(feat_grads);
  return losses;
}

std::vector<BBox> FaceModel::detect(const Tensor& image) {
  const auto& feats = backbone_.forward(image);
  const Tensor& top = feats[kBackboneBlocks];
  const double img_h = image.dim(2), img_w = image.dim(3);
  const auto anchors = generate_anchors(cfg_.anchors, top.dim(2), top.dim(3));
  auto rpn_out = rpn_.forward(top);
  auto proposals = propose(rpn_out, anchors, img_w, img_h, false);
  if (proposals.empty()) return {};
  auto pooled = roi_pool_forward(top, std::span<const BBox>(proposals),
                                 1.0 / feature_stride(kBackboneBlocks), Size2{7, 7});
  auto out = det_.forward(pooled.output);
  auto probs = softmax_forward(out.scores);
  std::vector<BBox> dets;
  for (int i = 0; i < static_cast<int>(proposals.size()); ++i) {
    const BoxDelta d{out.deltas.at(i, 0) * cfg_.bbox_std[0], out.deltas.at(i, 1) * cfg_.bbox_std[1],
                     out.deltas.at(i, 2) * cfg_.bbox_std[2], out.deltas.at(i, 3) * cfg_.bbox_std[3]};
    BBox b = clip_box(decode_box(d, proposals[i]), img_w, img_h);
    if (!b.valid()) continue;
    b.score = probs.at(i, 1);
    dets.push_back(b);
  }
  const auto keep = nms(dets, cfg_.det_nms);
  std::vector<BBox> result;
  for (int i : keep) result.push_back(dets[i]);
  return result;
}

Tensor FaceModel::embed(const Tensor& image, const std::vector<BBox>& boxes) {
  if (boxes.empty()) return {};
  const auto& feats = backbone_.forward(image);
  const int k = cfg_.share_depth;
  const int s = snet_input_size(k);
  auto pooled = roi_pool_forward(feats[k], std::span<const BBox>(boxes), 1.0 / feature_stride(k),
                                 Size2{s, s});
  return snet_.forward(rstn_.forward(pooled.output));
}

}  // namespace stnface
