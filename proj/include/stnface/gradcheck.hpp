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
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stnface/tensor.hpp"

namespace stnface {

/// One randomly drawn differentiable problem in float64: a scalar loss of
/// some tensors, plus the analytic gradient of that loss w.r.t. each of
/// them (computed at the unperturbed point).
struct GradInstance {
  std::vector<std::string> names;
  std::vector<TensorD*> wrt;
  std::function<double()> loss;
  std::function<std::vector<std::vector<double>>()> analytic;
  std::shared_ptr<void> keep_alive;
};

using GradInstanceBuilder = std::function<GradInstance(std::mt19937_64&)>;

struct GradcheckOptions {
  int instances = 20;
  double eps = 1e-3;
  double tolerance = 1e-3;
  // Probes whose eps and eps/2 central differences disagree by more than
  // this (relative, floored at 1) straddle a kink and are not scored.
  double kink_tolerance = 1e-5;
  int max_probes_per_tensor = 24;
  // Multiplies the analytic gradient; 1 except in negative-control tests.
  double analytic_scale = 1.0;
};

struct GradcheckResult {
  std::string op;
  int instances = 0;
  long probes = 0;
  long skipped_probes = 0;
  double max_rel_error = 0;
  std::string worst;  // "tensor[index]" of the worst probe
  bool passed = false;
};

/// Relative error |a - n| / max(|a|, |n|, 1).
double grad_rel_error(double analytic, double numeric);

/// Runs `instances` fresh problems from the builder.
GradcheckResult run_gradcheck(const std::string& op, const GradInstanceBuilder& builder,
                              std::uint64_t seed, const GradcheckOptions& opt = {});

/// Registered op names, in report order.
std::vector<std::string> gradcheck_ops();

/// Throws InputError for an unknown op.
const GradInstanceBuilder& gradcheck_builder(const std::string& op);

GradcheckResult run_gradcheck(const std::string& op, std::uint64_t seed,
                              const GradcheckOptions& opt = {});

}  // namespace stnface
