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

#include "stnface/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stnface/detection_head.hpp"
#include "stnface/ops.hpp"
#include "stnface/recognition.hpp"
#include "stnface/roi_pool.hpp"
#include "stnface/spatial_transformer.hpp"
#include "stnface/stn.hpp"

namespace stnface {

double grad_rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1.0});
  return std::abs(analytic - numeric) / scale;
}

GradcheckResult run_gradcheck(const std::string& op, const GradInstanceBuilder& builder,
                              std::uint64_t seed, const GradcheckOptions& opt) {
  GradcheckResult res;
  res.op = op;
  std::mt19937_64 rng(seed);
  for (int n = 0; n < opt.instances; ++n) {
    GradInstance inst = builder(rng);
    const auto analytic = inst.analytic();
    for (std::size_t t = 0; t < inst.wrt.size(); ++t) {
      TensorD& x = *inst.wrt[t];
      std::vector<std::size_t> idx(x.numel());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      if (static_cast<int>(idx.size()) > opt.max_probes_per_tensor) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(opt.max_probes_per_tensor));
      }
      for (std::size_t i : idx) {
        const double orig = x[i];
        auto central = [&](double h) {
          x[i] = orig + h;
          const double fp = inst.loss();
          x[i] = orig - h;
          const double fm = inst.loss();
          x[i] = orig;
          return (fp - fm) / (2 * h);
        };
        const double n1 = central(opt.eps);
        const double n2 = central(opt.eps / 2);
        if (std::abs(n1 - n2) > opt.kink_tolerance * std::max({std::abs(n1), std::abs(n2), 1.0})) {
          ++res.skipped_probes;
          continue;
        }
        ++res.probes;
        const double a = analytic[t][i] * opt.analytic_scale;
        const double err = grad_rel_error(a, n1);
        if (res.worst.empty() || err > res.max_rel_error) {
          res.max_rel_error = err;
          res.worst = inst.names[t] + "[" + std::to_string(i) + "]";
        }
      }
    }
    ++res.instances;
  }
  res.passed = res.probes > 0 && res.max_rel_error <= opt.tolerance;
  return res;
}

namespace {

using Grads = std::vector<std::vector<double>>;

void fill_uniform(TensorD& t, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
}

// Values bounded away from zero, for inputs that feed a kink at 0.
void fill_away_from_zero(TensorD& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  for (auto& v : t.data()) v = (rng() & 1 ? 1 : -1) * mag(rng);
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> to_vec(const TensorD& t) { return {t.data().begin(), t.data().end()}; }
std::vector<double> grad_vec(const BasicParam<double>& p) {
  return {p.value.grad().begin(), p.value.grad().end()};
}

int pick(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// A coordinate in [lo, hi] whose fractional part stays in [0.05, 0.95].
double off_lattice(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> whole(lo, hi);
  std::uniform_real_distribution<double> frac(0.05, 0.95);
  return std::floor(whole(rng)) + frac(rng);
}

GradInstance conv2d_instance(std::mt19937_64& rng) {
  struct S {
    TensorD x{{2, 2, 5, 5}}, w{{3, 2, 3, 3}}, b{{3}}, r;
    int stride = 1, pad = 0;
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->x, rng);
  fill_uniform(s->w, rng);
  fill_uniform(s->b, rng);
  s->stride = pick(rng, 1, 2);
  s->pad = pick(rng, 0, 1);
  s->r = conv2d_forward(s->x, s->w, s->b, s->stride, s->pad);
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"input", "weight", "bias"};
  g.wrt = {&s->x, &s->w, &s->b};
  g.loss = [s] { return dot(conv2d_forward(s->x, s->w, s->b, s->stride, s->pad), s->r); };
  g.analytic = [s] {
    auto gr = conv2d_backward(s->r, s->x, s->w, s->stride, s->pad);
    return Grads{to_vec(gr.input), to_vec(gr.weight), to_vec(gr.bias)};
  };
  g.keep_alive = s;
  return g;
}

GradInstance maxpool_instance(std::mt19937_64& rng) {
  struct S {
    TensorD x{{1, 2, 6, 6}}, r;
    int k = 2, stride = 2;
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->x, rng);
  s->k = pick(rng, 2, 3);
  s->r = maxpool2d_forward(s->x, s->k, s->stride).output;
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"input"};
  g.wrt = {&s->x};
  g.loss = [s] { return dot(maxpool2d_forward(s->x, s->k, s->stride).output, s->r); };
  g.analytic = [s] {
    auto f = maxpool2d_forward(s->x, s->k, s->stride);
    return Grads{to_vec(maxpool2d_backward(s->r, std::span<const std::int64_t>(f.argmax),
                                                 s->x.shape()))};
  };
  g.keep_alive = s;
  return g;
}

GradInstance fc_instance(std::mt19937_64& rng) {
  struct S {
    TensorD x{{3, 4}}, w{{4, 5}}, b{{5}}, r{{3, 5}};
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->x, rng);
  fill_uniform(s->w, rng);
  fill_uniform(s->b, rng);
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"input", "weight", "bias"};
  g.wrt = {&s->x, &s->w, &s->b};
  g.loss = [s] { return dot(fc_forward(s->x, s->w, s->b), s->r); };
  g.analytic = [s] {
    auto gr = fc_backward(s->r, s->x, s->w);
    return Grads{to_vec(gr.input), to_vec(gr.weight), to_vec(gr.bias)};
  };
  g.keep_alive = s;
  return g;
}

GradInstance relu_instance(std::mt19937_64& rng) {
  struct S {
    TensorD x{{2, 3, 4, 4}}, r{{2, 3, 4, 4}};
  };
  auto s = std::make_shared<S>();
  fill_away_from_zero(s->x, rng);
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"input"};
  g.wrt = {&s->x};
  g.loss = [s] { return dot(relu_forward(s->x), s->r); };
  g.analytic = [s] { return Grads{to_vec(relu_backward(s->r, s->x))}; };
  g.keep_alive = s;
  return g;
}

GradInstance avgpool_instance(std::mt19937_64& rng) {
  struct S {
    TensorD x{{2, 3, 3, 4}}, r{{2, 3}};
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->x, rng);
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"input"};
  g.wrt = {&s->x};
  g.loss = [s] { return dot(avgpool_global_forward(s->x), s->r); };
  g.analytic = [s] { return Grads{to_vec(avgpool_global_backward(s->r, s->x.shape()))}; };
  g.keep_alive = s;
  return g;
}

GradInstance softmax_instance(std::mt19937_64& rng) {
  struct S {
    TensorD x{{3, 5}};
    std::vector<int> labels;
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->x, rng, -3, 3);
  for (int i = 0; i < 3; ++i) s->labels.push_back(pick(rng, 0, 4));
  GradInstance g;
  g.names = {"logits"};
  g.wrt = {&s->x};
  g.loss = [s] { return softmax_xent_loss(s->x, s->labels).loss; };
  g.analytic = [s] { return Grads{to_vec(softmax_xent_loss(s->x, s->labels).grad)}; };
  g.keep_alive = s;
  return g;
}

GradInstanceBuilder regression_builder(RegressionLoss mode) {
  return [mode](std::mt19937_64& rng) {
    struct S {
      TensorD p{{4, 4}}, t{{4, 4}};
      RegressionLoss mode;
    };
    auto s = std::make_shared<S>();
    s->mode = mode;
    fill_uniform(s->p, rng, -2, 2);
    fill_uniform(s->t, rng, -2, 2);
    GradInstance g;
    g.names = {"pred"};
    g.wrt = {&s->p};
    g.loss = [s] { return regression_loss(s->p, s->t, s->mode).loss; };
    g.analytic = [s] { return Grads{to_vec(regression_loss(s->p, s->t, s->mode).grad)}; };
    g.keep_alive = s;
    return g;
  };
}

GradInstance roi_pool_instance(std::mt19937_64& rng) {
  struct S {
    TensorD f{{1, 2, 8, 8}}, r;
    std::vector<BBox> boxes;
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->f, rng);
  std::uniform_real_distribution<double> u(0, 64);
  for (int i = 0; i < 3; ++i) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    s->boxes.push_back({a, c, b + 1, d + 1});
  }
  s->r = TensorD({3, 2, 3, 3});
  fill_uniform(s->r, rng);
  auto fwd = [s] { return roi_pool_forward(s->f, std::span<const BBox>(s->boxes), 0.125, Size2{3, 3}); };
  GradInstance g;
  g.names = {"features"};
  g.wrt = {&s->f};
  g.loss = [s, fwd] { return dot(fwd().output, s->r); };
  g.analytic = [s, fwd] {
    auto f = fwd();
    return Grads{to_vec(roi_pool_backward(s->r, std::span<const std::int64_t>(f.argmax),
                                                s->f.shape()))};
  };
  g.keep_alive = s;
  return g;
}

GradInstance sampler_instance(std::mt19937_64& rng) {
  struct S {
    TensorD U{{2, 2, 5, 6}}, r{{2, 2, 4, 4}};
    BasicSampleGrid<double> grid;
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->U, rng);
  fill_uniform(s->r, rng);
  s->grid.out_size = {4, 4};
  s->grid.src_size = {5, 6};
  s->grid.source_coords = TensorD({2, 4, 4, 2});
  for (std::size_t i = 0; i < s->grid.source_coords.numel(); i += 2) {
    s->grid.source_coords[i] = off_lattice(rng, -1.5, 6.4);
    s->grid.source_coords[i + 1] = off_lattice(rng, -1.5, 5.4);
  }
  GradInstance g;
  g.names = {"U", "coords"};
  g.wrt = {&s->U, &s->grid.source_coords};
  g.loss = [s] { return dot(bilinear_sample_forward(s->U, s->grid), s->r); };
  g.analytic = [s] {
    auto gr = bilinear_sample_backward(s->r, s->U, s->grid);
    return Grads{to_vec(gr.grad_U), to_vec(gr.grad_coords)};
  };
  g.keep_alive = s;
  return g;
}

GradInstance theta_instance(std::mt19937_64& rng) {
  struct S {
    TensorD U{{2, 2, 6, 6}}, theta{{2, 6}}, r;
    Size2 out{5, 5};
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->U, rng);
  fill_uniform(s->theta, rng, -0.3, 0.3);
  for (int r = 0; r < 2; ++r) {
    s->theta[r * 6 + 0] += 1;
    s->theta[r * 6 + 4] += 1;
  }
  s->r = TensorD({2, 2, 5, 5});
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"theta", "U"};
  g.wrt = {&s->theta, &s->U};
  g.loss = [s] {
    return dot(bilinear_sample_forward(s->U, affine_grid(s->theta, s->out, Size2{6, 6})), s->r);
  };
  g.analytic = [s] {
    auto grid = affine_grid(s->theta, s->out, Size2{6, 6});
    auto gr = bilinear_sample_backward(s->r, s->U, grid);
    return Grads{to_vec(theta_backward(gr.grad_coords, s->out, Size2{6, 6})),
                       to_vec(gr.grad_U)};
  };
  g.keep_alive = s;
  return g;
}

// Moves a freshly built transformer away from its identity start so the
// sampling grid is not the integer lattice.
void perturb_head(LocalizationHead<double>& head, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(-0.05, 0.05), b(-0.15, 0.15);
  for (auto& v : head.fc().weight.value.data()) v = w(rng);
  for (auto& v : head.fc().bias.value.data()) v += b(rng);
}

GradInstance stn_instance(std::mt19937_64& rng) {
  struct S {
    SpatialTransformer<double> stn{"stn", 2, 7};
    TensorD U{{2, 2, 7, 7}}, r{{2, 2, 7, 7}};
    ParamRefs<double> params;
  };
  auto s = std::make_shared<S>();
  s->stn.init(rng);
  perturb_head(s->stn.head(), rng);
  s->stn.collect(s->params);
  fill_uniform(s->U, rng);
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"U"};
  g.wrt = {&s->U};
  for (auto* p : s->params) {
    g.names.push_back(p->name);
    g.wrt.push_back(&p->value);
  }
  g.loss = [s] { return dot(s->stn.forward(s->U), s->r); };
  g.analytic = [s] {
    zero_grads(s->params);
    s->stn.forward(s->U);
    std::vector<std::vector<double>> out{to_vec(s->stn.backward(s->r))};
    for (auto* p : s->params) out.push_back(grad_vec(*p));
    return out;
  };
  g.keep_alive = s;
  return g;
}

GradInstance residual_instance(std::mt19937_64& rng) {
  struct S {
    ResidualBlock<double> block;
    TensorD x, r;
    ParamRefs<double> params;
  };
  auto s = std::make_shared<S>();
  const int in = 3, out = rng() & 1 ? 3 : 4;
  s->block = ResidualBlock<double>("res", in, out);
  s->block.init(rng);
  std::uniform_real_distribution<double> bias(-0.2, 0.2);
  s->block.collect(s->params);
  for (auto* p : s->params) {
    if (p->name.ends_with(".bias")) {
      for (auto& v : p->value.data()) v = bias(rng);
    }
  }
  s->x = TensorD({2, in, 5, 5});
  fill_uniform(s->x, rng);
  s->r = TensorD({2, out, 5, 5});
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"input"};
  g.wrt = {&s->x};
  for (auto* p : s->params) {
    g.names.push_back(p->name);
    g.wrt.push_back(&p->value);
  }
  g.loss = [s] { return dot(s->block.forward(s->x), s->r); };
  g.analytic = [s] {
    zero_grads(s->params);
    s->block.forward(s->x);
    std::vector<std::vector<double>> o{to_vec(s->block.backward(s->r))};
    for (auto* p : s->params) o.push_back(grad_vec(*p));
    return o;
  };
  g.keep_alive = s;
  return g;
}

GradInstance center_instance(std::mt19937_64& rng) {
  struct S {
    TensorD x{{4, 6}};
    CenterBank bank{3, 6};
    std::vector<int> labels;
  };
  auto s = std::make_shared<S>();
  fill_uniform(s->x, rng);
  std::uniform_real_distribution<float> c(-1, 1);
  for (auto& v : s->bank.centers.data()) v = c(rng);
  for (int i = 0; i < 4; ++i) s->labels.push_back(pick(rng, 0, 2));
  GradInstance g;
  g.names = {"embeddings"};
  g.wrt = {&s->x};
  g.loss = [s] { return center_loss(s->x, s->labels, s->bank, 0.7).loss; };
  g.analytic = [s] { return Grads{to_vec(center_loss(s->x, s->labels, s->bank, 0.7).grad)}; };
  g.keep_alive = s;
  return g;
}

GradInstance detection_head_instance(std::mt19937_64& rng) {
  struct S {
    DetectionHead<double> head{DetectionHeadConfig{2, 7, {8, 6}, StnMode::kLearned}};
    TensorD x{{2, 2, 7, 7}}, rs{{2, 2}}, rd{{2, 4}};
    ParamRefs<double> params;
  };
  auto s = std::make_shared<S>();
  s->head.init(rng);
  perturb_head(s->head.stn().head(), rng);
  s->head.collect(s->params);
  fill_uniform(s->x, rng);
  fill_uniform(s->rs, rng);
  fill_uniform(s->rd, rng);
  GradInstance g;
  g.names = {"pooled"};
  g.wrt = {&s->x};
  for (auto* p : s->params) {
    g.names.push_back(p->name);
    g.wrt.push_back(&p->value);
  }
  g.loss = [s] {
    auto o = s->head.forward(s->x);
    return dot(o.scores, s->rs) + dot(o.deltas, s->rd);
  };
  g.analytic = [s] {
    zero_grads(s->params);
    s->head.forward(s->x);
    std::vector<std::vector<double>> o{to_vec(s->head.backward(s->rs, s->rd))};
    for (auto* p : s->params) o.push_back(grad_vec(*p));
    return o;
  };
  g.keep_alive = s;
  return g;
}

GradInstance snet_instance(std::mt19937_64& rng) {
  struct S {
    SNet<double> net;
    TensorD x, r;
    ParamRefs<double> params;
  };
  auto s = std::make_shared<S>();
  SNetConfig cfg;
  cfg.share_depth = pick(rng, 2, 3);
  cfg.backbone.widths = {2, 3, 3, 4};
  cfg.res_widths = {4, 5};
  cfg.embed_dim = 6;
  s->net = SNet<double>(cfg);
  s->net.init(rng);
  s->net.collect(s->params);
  const int side = snet_input_size(cfg.share_depth);
  s->x = TensorD({2, cfg.input_channels(), side, side});
  fill_uniform(s->x, rng);
  s->r = TensorD({2, 6});
  fill_uniform(s->r, rng);
  GradInstance g;
  g.names = {"region"};
  g.wrt = {&s->x};
  for (auto* p : s->params) {
    g.names.push_back(p->name);
    g.wrt.push_back(&p->value);
  }
  g.loss = [s] { return dot(s->net.forward(s->x), s->r); };
  g.analytic = [s] {
    zero_grads(s->params);
    s->net.forward(s->x);
    std::vector<std::vector<double>> o{to_vec(s->net.backward(s->r))};
    for (auto* p : s->params) o.push_back(grad_vec(*p));
    return o;
  };
  g.keep_alive = s;
  return g;
}

const std::vector<std::pair<std::string, GradInstanceBuilder>>& registry() {
  static const std::vector<std::pair<std::string, GradInstanceBuilder>> r = {
      {"conv2d", conv2d_instance},
      {"maxpool2d", maxpool_instance},
      {"fc", fc_instance},
      {"relu", relu_instance},
      {"avgpool", avgpool_instance},
      {"softmax_xent", softmax_instance},
      {"l2_loss", regression_builder(RegressionLoss::kL2)},
      {"smooth_l1_loss", regression_builder(RegressionLoss::kSmoothL1)},
      {"roi_pool", roi_pool_instance},
      {"bilinear_sample", sampler_instance},
      {"theta", theta_instance},
      {"localization_head", stn_instance},
      {"residual_block", residual_instance},
      {"center_loss", center_instance},
      {"detection_head", detection_head_instance},
      {"snet", snet_instance},
  };
  return r;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> out;
  for (const auto& [name, b] : registry()) out.push_back(name);
  return out;
}

const GradInstanceBuilder& gradcheck_builder(const std::string& op) {
  for (const auto& [name, b] : registry()) {
    if (name == op) return b;
  }
  throw InputError("unknown gradcheck op '" + op + "'");
}

GradcheckResult run_gradcheck(const std::string& op, std::uint64_t seed,
                              const GradcheckOptions& opt) {
  return run_gradcheck(op, gradcheck_builder(op), seed, opt);
}

}  // namespace stnface
