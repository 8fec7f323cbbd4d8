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
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stnface/model.hpp"

namespace stnface {

/// base_lr * gamma^floor(iter / stepsize).
double step_lr(double base_lr, double gamma, int stepsize, std::uint64_t iter);

/// Classic momentum: v <- momentum*v + lr*lr_mult*(grad + weight_decay*param);
/// param <- param - v. Frozen parameters are left untouched (velocity included).
void sgd_momentum_update(Param& param, Tensor& velocity, double lr, double momentum,
                         double weight_decay = 0);

/// Scales all non-frozen gradients so their global L2 norm is at most
/// max_norm. max_norm <= 0 disables. Returns the norm before clipping.
double clip_global_norm(const ParamRefs<float>& params, double max_norm);

struct OptimizerState {
  std::map<std::string, Tensor> velocity;  // keyed by parameter name
  std::uint64_t iter = 0;

  Tensor& velocity_for(const Param& p);
};

/// One optimizer step from iter_size = passes.size() backward passes. Each
/// pass receives the gradient scale 1/iter_size and must accumulate its
/// gradients into the parameters, so the update uses the mean gradient.
/// before_update sees the accumulated, unclipped gradients. Weight decay is
/// applied after clipping.
void accumulate_step(const ParamRefs<float>& params,
                     std::span<const std::function<void(double)>> passes,
                     OptimizerState& state, double lr, double momentum, double clip_norm = 0,
                     const std::function<void()>& before_update = {}, double weight_decay = 0);

struct Stage {
  std::string name;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;  // exclusive
  std::vector<std::string> frozen;    // parameter-name prefixes
  std::vector<std::string> datasets;  // active sources, alternated per step
};

struct StageSchedule {
  std::vector<Stage> stages;
  std::map<std::string, BranchWeights> loss_weights;  // by dataset name

  /// Throws ConfigError on gaps, overlaps, incomplete coverage of
  /// [0, max_iter), unknown datasets or negative weights.
  void validate(std::uint64_t max_iter) const;
  const Stage& stage_at(std::uint64_t iter) const;
  int stage_index(std::uint64_t iter) const;
};

/// Detection-only, joint, then recognition-only with detection frozen;
/// boundaries at joint_start and recog_start fractions of max_iter.
StageSchedule default_schedule(std::uint64_t max_iter, double joint_start = 0.5,
                               double recog_start = 0.8,
                               BranchWeights wider = {1.0, 1.0, 0.0},
                               BranchWeights casia = {0.0, 0.5, 1.0});

/// Supplies training samples as a pure function of (iter, k).
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual Sample sample(std::uint64_t iter, int k) const = 0;
};

struct SolverConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  double gamma = 0.1;
  int stepsize = 20000;
  int iter_size = 1;
  std::uint64_t max_iter = 1000;
  double clip_norm = 10.0;
  double weight_decay = 0.0005;
  std::uint64_t checkpoint_interval = 0;  // 0: only at the end
};

struct MetricsRow {
  std::uint64_t iter = 0;
  std::string stage;
  double lr = 0;
  PassLosses losses;
  std::string dataset;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);

/// Called after gradients are accumulated and before the update, with the
/// model's grad buffers populated.
using GradObserver = std::function<void(std::uint64_t iter, const Stage&,
                                        const std::string& dataset, FaceModel&)>;

class Trainer {
 public:
  Trainer(FaceModel& model, StageSchedule schedule, SolverConfig solver,
          std::map<std::string, std::shared_ptr<const SampleSource>> sources,
          std::uint64_t sampling_seed);

  /// Runs iterations until `until` (capped at max_iter). Metrics rows go
  /// to `metrics` if given; `on_checkpoint` fires at every checkpoint
  /// boundary with the number of completed iterations.
  void run(std::uint64_t until, std::ostream* metrics = nullptr,
           const std::function<void(std::uint64_t)>& on_checkpoint = {});

  /// One accumulated optimizer step at the current iteration.
  MetricsRow step();

  void set_observer(GradObserver obs) { observer_ = std::move(obs); }
  OptimizerState& state() { return state_; }
  const StageSchedule& schedule() const { return schedule_; }
  const SolverConfig& solver() const { return solver_; }

 private:
  FaceModel& model_;
  StageSchedule schedule_;
  SolverConfig solver_;
  std::map<std::string, std::shared_ptr<const SampleSource>> sources_;
  std::uint64_t sampling_seed_;
  OptimizerState state_;
  GradObserver observer_;
};

/// Deterministic 64-bit mixing used for every derived seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace stnface
