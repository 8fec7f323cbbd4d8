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

#include "stnface/pipeline.hpp"

#include <chrono>
#include <set>

#include "stnface/image_io.hpp"

namespace stnface {

ModelConfig model_config(const RunConfig& cfg) {
  ModelConfig m = cfg.model;
  m.num_identities = cfg.split.train_identities;
  return m;
}

std::unique_ptr<FaceModel> build_model(const RunConfig& cfg) {
  auto model = std::make_unique<FaceModel>(model_config(cfg));
  model->init(cfg.init_seed());
  return model;
}

Split make_run_split(const RunConfig& cfg) { return make_split(cfg.split, cfg.data_seed()); }

std::map<std::string, std::shared_ptr<const SampleSource>> make_sources(const RunConfig& cfg,
                                                                        const Split& split) {
  const SyntheticWorld world = cfg.world();
  return {{"wider", std::make_shared<DetectionSource>(world)},
          {"casia", std::make_shared<IdentitySource>(world, split.train)}};
}

namespace {

struct RefLess {
  bool operator()(const FaceRef& a, const FaceRef& b) const {
    return std::tie(a.identity, a.instance) < std::tie(b.identity, b.instance);
  }
};

}  // namespace

EvalSummary evaluate(FaceModel& model, const RunConfig& cfg, const Split& split) {
  EvalSummary out;
  const SyntheticWorld world = cfg.world();
  for (int i = 0; i < cfg.det_test_tiles; ++i) {
    Tile t = world.detection_tile(i);
    out.images.push_back({model.detect(as_batch(t.image)), t.boxes});
  }
  out.detection = detection_sweep(out.images, cfg.eval_iou);

  // Embed every instance referenced by a pair once, on its true box.
  std::map<FaceRef, std::vector<float>, RefLess> emb;
  std::set<FaceRef, RefLess> test_refs;
  for (const auto* pairs : {&split.calib_pairs, &split.test_pairs}) {
    for (const auto& p : *pairs) {
      emb.emplace(p.a, std::vector<float>{});
      emb.emplace(p.b, std::vector<float>{});
      if (pairs == &split.test_pairs) {
        test_refs.insert(p.a);
        test_refs.insert(p.b);
      }
    }
  }
  double seconds = 0;
  for (auto& [ref, vec] : emb) {
    Tile t = world.instance(ref);
    const auto start = std::chrono::steady_clock::now();
    Tensor e = model.embed(as_batch(t.image), t.boxes);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    vec.assign(e.data().begin(), e.data().end());
  }
  out.ms_per_face = emb.empty() ? 0.0 : 1000.0 * seconds / static_cast<double>(emb.size());
  for (const auto& ref : test_refs) out.test_embeddings.push_back({emb.at(ref), ref.identity});

  auto score = [&](const std::vector<PairRef>& pairs) {
    std::vector<ScoredPair> s;
    for (const auto& p : pairs) {
      s.push_back({cosine_similarity(emb.at(p.a), emb.at(p.b)), p.same});
    }
    return s;
  };
  out.verification = verification_report(score(split.calib_pairs), score(split.test_pairs));
  return out;
}

std::vector<ImageDetections> detect_annotated(FaceModel& model, const AnnotationSet& set,
                                              const std::filesystem::path& base_dir) {
  std::vector<ImageDetections> out;
  for (const auto& a : set.images) {
    const Tensor img = read_pnm(base_dir / a.path);
    out.push_back({model.detect(as_batch(img)), a.boxes});
  }
  return out;
}

}  // namespace stnface
