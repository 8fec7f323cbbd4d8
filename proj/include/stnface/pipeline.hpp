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

// Wiring shared by the CLI and the end-to-end tests: build the model and
// data sources from a RunConfig, and evaluate a model on the synthetic
// held-out sets.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stnface/config.hpp"
#include "stnface/eval.hpp"

namespace stnface {

ModelConfig model_config(const RunConfig& cfg);

/// Built and initialised from cfg.init_seed().
std::unique_ptr<FaceModel> build_model(const RunConfig& cfg);

Split make_run_split(const RunConfig& cfg);

/// "wider": detection-only stitched batches; "casia": labelled training
/// identities.
std::map<std::string, std::shared_ptr<const SampleSource>> make_sources(const RunConfig& cfg,
                                                                        const Split& split);

struct EvalSummary {
  DetectionReport detection;
  std::vector<ImageDetections> images;
  VerificationReport verification;
  double ms_per_face = 0;  // embedding time per face, excluding detection
  std::vector<Embedding> test_embeddings;
};

/// Detection on cfg.det_test_tiles held-out tiles, verification threshold
/// fit on the calibration pairs and applied to the test pairs.
EvalSummary evaluate(FaceModel& model, const RunConfig& cfg, const Split& split);

/// Detection on annotated images (PPM/PGM paths relative to base_dir).
std::vector<ImageDetections> detect_annotated(FaceModel& model, const AnnotationSet& set,
                                              const std::filesystem::path& base_dir);

}  // namespace stnface
