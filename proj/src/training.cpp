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

#include "stnface/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

namespace stnface {

double step_lr(double base_lr, double gamma, int stepsize, std::uint64_t iter) {
  if (stepsize < 1) throw ConfigError("solver.stepsize", "must be >= 1");
  return base_lr * std::pow(gamma, static_cast<double>(iter / static_cast<std::uint64_t>(stepsize)));
}

void sgd_momentum_update(Param& param, Tensor& velocity, double lr, double momentum,
                         double weight_decay) {
  if (param.frozen) return;
  if (velocity.shape() != param.value.shape()) {
    throw DimensionError("velocity " + shape_str(velocity.shape()) + " for parameter " +
                         param.name + " " + shape_str(param.value.shape()));
  }
  param.value.ensure_grad();
  auto g = param.value.grad();
  auto v = velocity.data();
  auto p = param.value.data();
  const float m = static_cast<float>(momentum), a = static_cast<float>(lr * param.lr_mult);
  const float wd = static_cast<float>(weight_decay);
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = m * v[i] + a * (g[i] + wd * p[i]);
    p[i] -= v[i];
  }
}

double clip_global_norm(const ParamRefs<float>& params, double max_norm) {
  double sq = 0;
  for (const auto* p : params) {
    if (p->frozen || !p->value.has_grad()) continue;
    for (float g : p->value.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto* p : params) {
      if (p->frozen || !p->value.has_grad()) continue;
      for (float& g : p->value.grad()) g *= s;
    }
  }
  return norm;
}

Tensor& OptimizerState::velocity_for(const Param& p) {
  auto it = velocity.find(p.name);
  if (it == velocity.end()) it = velocity.emplace(p.name, Tensor(p.value.shape())).first;
  return it->second;
}

void accumulate_step(const ParamRefs<float>& params,
                     std::span<const std::function<void(double)>> passes, OptimizerState& state,
                     double lr, double momentum, double clip_norm,
                     const std::function<void()>& before_update, double weight_decay) {
  if (passes.empty()) throw InputError("accumulate_step needs at least one pass");
  zero_grads(params);
  const double scale = 1.0 / static_cast<double>(passes.size());
  for (const auto& pass : passes) pass(scale);
  if (before_update) before_update();
  clip_global_norm(params, clip_norm);
  for (auto* p : params) {
    sgd_momentum_update(*p, state.velocity_for(*p), lr, momentum, weight_decay);
  }
  ++state.iter;
}

void StageSchedule::validate(std::uint64_t max_iter) const {
  std::uint64_t expect = 0;
  for (const auto& s : stages) {
    if (s.begin != expect) {
      throw ConfigError("schedule", "stage '" + s.name + "' begins at " + std::to_string(s.begin) +
                                        ", expected " + std::to_string(expect));
    }
    if (s.end < s.begin) throw ConfigError("schedule", "stage '" + s.name + "' ends before it begins");
    if (s.end > s.begin && s.datasets.empty()) {
      throw ConfigError("schedule", "stage '" + s.name + "' has no datasets");
    }
    for (const auto& d : s.datasets) {
      if (!loss_weights.count(d)) throw ConfigError("schedule", "no loss weights for dataset " + d);
    }
    expect = s.end;
  }
  if (expect != max_iter) {
    throw ConfigError("schedule", "stages cover [0," + std::to_string(expect) + ") but max_iter is " +
                                      std::to_string(max_iter));
  }
  for (const auto& [name, w] : loss_weights) {
    if (w.rpn < 0 || w.det < 0 || w.recog < 0) {
      throw ConfigError("loss." + name, "loss weights must be non-negative");
    }
  }
}

int StageSchedule::stage_index(std::uint64_t iter) const {
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (iter >= stages[i].begin && iter < stages[i].end) return static_cast<int>(i);
  }
  throw IndexError("iteration " + std::to_string(iter) + " outside the schedule");
}

const Stage& StageSchedule::stage_at(std::uint64_t iter) const {
  return stages[static_cast<std::size_t>(stage_index(iter))];
}

StageSchedule default_schedule(std::uint64_t max_iter, double joint_start, double recog_start,
                               BranchWeights wider, BranchWeights casia) {
  if (!(0 <= joint_start && joint_start <= recog_start && recog_start <= 1)) {
    throw ConfigError("schedule", "need 0 <= joint_start <= recog_start <= 1");
  }
  const auto a = static_cast<std::uint64_t>(std::llround(joint_start * max_iter));
  const auto b = static_cast<std::uint64_t>(std::llround(recog_start * max_iter));
  StageSchedule s;
  s.stages = {
      {"detection", 0, a, {"rstn.", "snet.", "recog."}, {"wider"}},
      {"joint", a, b, {}, {"wider", "casia"}},
      {"recognition", b, max_iter, kDetectionGroups, {"casia"}},
  };
  s.loss_weights = {{"wider", wider}, {"casia", casia}};
  return s;
}

void write_metrics_header(std::ostream& os) {
  os << "iter,stage,lr,loss_rpn,loss_det,loss_softmax,loss_center,dataset\n";
}

void write_metrics_row(std::ostream& os, const MetricsRow& r) {
  os << r.iter << ',' << r.stage << ',' << std::setprecision(9) << r.lr << ','
     << r.losses.rpn << ',' << r.losses.det << ',' << r.losses.softmax << ','
     << r.losses.center << ',' << r.dataset << '\n';
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined state
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Trainer::Trainer(FaceModel& model, StageSchedule schedule, SolverConfig solver,
                 std::map<std::string, std::shared_ptr<const SampleSource>> sources,
                 std::uint64_t sampling_seed)
    : model_(model),
      schedule_(std::move(schedule)),
      solver_(solver),
      sources_(std::move(sources)),
      sampling_seed_(sampling_seed) {
  if (solver_.iter_size < 1) throw ConfigError("solver.iter_size", "must be >= 1");
  schedule_.validate(solver_.max_iter);
  for (const auto& st : schedule_.stages) {
    for (const auto& d : st.datasets) {
      if (!sources_.count(d)) throw ConfigError("schedule", "no sample source for dataset " + d);
    }
  }
}

MetricsRow Trainer::step() {
  const std::uint64_t iter = state_.iter;
  const Stage& stage = schedule_.stage_at(iter);
  model_.set_frozen({""}, false);
  model_.set_frozen(stage.frozen, true);

  const std::string& dataset = stage.datasets[(iter - stage.begin) % stage.datasets.size()];
  const BranchWeights w = schedule_.loss_weights.at(dataset);
  const SampleSource& src = *sources_.at(dataset);
  const double lr = step_lr(solver_.base_lr, solver_.gamma, solver_.stepsize, iter);

  MetricsRow row;
  row.iter = iter;
  row.stage = stage.name;
  row.lr = lr;
  row.dataset = dataset;

  std::vector<std::function<void(double)>> passes;
  for (int k = 0; k < solver_.iter_size; ++k) {
    passes.emplace_back([&, k](double scale) {
      std::mt19937_64 rng(mix_seed(mix_seed(sampling_seed_, iter), static_cast<std::uint64_t>(k)));
      const Sample s = src.sample(iter, k);
      const PassLosses l = model_.train_pass(s, w, scale, rng);
      row.losses.rpn += l.rpn * scale;
      row.losses.det += l.det * scale;
      row.losses.softmax += l.softmax * scale;
      row.losses.center += l.center * scale;
    });
  }
  std::function<void()> observe;
  if (observer_) observe = [&] { observer_(iter, stage, dataset, model_); };
  accumulate_step(model_.params(), passes, state_, lr, solver_.momentum, solver_.clip_norm,
                  observe, solver_.weight_decay);
  return row;
}

void Trainer::run(std::uint64_t until, std::ostream* metrics,
                  const std::function<void(std::uint64_t)>& on_checkpoint) {
  until = std::min(until, solver_.max_iter);
  while (state_.iter < until) {
    auto row = step();
    if (metrics) write_metrics_row(*metrics, row);
    const auto done = state_.iter;
    if (on_checkpoint && solver_.checkpoint_interval > 0 && done % solver_.checkpoint_interval == 0 &&
        done != solver_.max_iter) {
      on_checkpoint(done);
    }
  }
  if (on_checkpoint && state_.iter == solver_.max_iter) on_checkpoint(state_.iter);
}

}  // namespace stnface
