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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "../common/tiny_run.hpp"
#include "stnface/checkpoint.hpp"
#include "stnface/errors.hpp"
#include "stnface/pipeline.hpp"
#include "test_util.hpp"

namespace stnface {
namespace {

using test::bit_equal;
namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / name; }

TEST(FaceModel, ParameterNamesUniqueAndGrouped) {
  auto model = build_model(test::tiny_run_config());
  std::set<std::string> names;
  for (auto* p : model->params()) {
    EXPECT_TRUE(names.insert(p->name).second) << p->name;
    EXPECT_NE(name_in_groups(p->name, kDetectionGroups), name_in_groups(p->name, kRecognitionGroups))
        << p->name;
  }
  for (const char* must : {"mnet.conv1.weight", "rpn.cls.weight", "dstn.fc.bias", "det.score.weight",
                           "rstn.fc.weight", "snet.fc.weight", "recog.cls.weight"}) {
    EXPECT_TRUE(names.count(must)) << must;
  }
}

TEST(FaceModel, StnHeadsUseTheirLrMult) {
  auto cfg = test::tiny_run_config();
  cfg.model.stn_lr_mult = 0.125;
  auto model = build_model(cfg);
  for (auto* p : model->params()) {
    const bool stn = p->name.starts_with("dstn.") || p->name.starts_with("rstn.");
    EXPECT_EQ(p->lr_mult, stn ? 0.125 : 1.0) << p->name;
  }
}

TEST(FaceModel, StrideMismatchRejected) {
  auto cfg = test::tiny_run_config();
  cfg.model.anchors.stride = 16;
  EXPECT_THROW(build_model(cfg), ConfigError);
}

TEST(FaceModel, InitialStnThetasAreIdentity) {
  auto cfg = test::tiny_run_config();
  auto model = build_model(cfg);
  const Tile t = cfg.world().detection_tile(0);
  const Tensor img = as_batch(t.image);
  model->detect(img);
  model->embed(img, t.boxes);
  for (const Tensor* th : {&model->det_head().stn().last_theta(), &model->recog_stn().last_theta()}) {
    ASSERT_FALSE(th->empty());
    for (int r = 0; r < th->dim(0); ++r) {
      const float id[6] = {1, 0, 0, 0, 1, 0};
      for (int k = 0; k < 6; ++k) EXPECT_EQ((*th)[r * 6 + k], id[k]);
    }
  }
}

TEST(FaceModel, DetectAndEmbedOutputs) {
  auto cfg = test::tiny_run_config();
  auto model = build_model(cfg);
  const Tile t = cfg.world().detection_tile(1);
  const auto dets = model->detect(as_batch(t.image));
  EXPECT_LE(dets.size(), static_cast<std::size_t>(cfg.model.proposals_test));
  for (std::size_t i = 0; i < dets.size(); ++i) {
    ASSERT_TRUE(dets[i].score.has_value());
    EXPECT_GE(*dets[i].score, 0.0);
    EXPECT_LE(*dets[i].score, 1.0);
    if (i) { EXPECT_GE(*dets[i - 1].score, *dets[i].score); }
    EXPECT_GE(dets[i].x1, 0.0);
    EXPECT_LE(dets[i].x2, 64.0);
  }
  const std::vector<BBox> boxes{t.boxes[0], BBox{4, 4, 30, 36}};
  const Tensor e = model->embed(as_batch(t.image), boxes);
  EXPECT_EQ(e.shape(), (Shape{2, cfg.model.embed_dim}));
}

TEST(FaceModel, IdentityStnAblationKeepsEmbeddingShape) {
  auto cfg = test::tiny_run_config();
  auto learned = build_model(cfg);
  cfg.model.recog_stn = StnMode::kIdentity;
  cfg.model.det_stn = StnMode::kIdentity;
  auto frozen = build_model(cfg);
  for (auto* p : frozen->params()) {
    EXPECT_NE(p->name.rfind("rstn.", 0), 0u);
    EXPECT_NE(p->name.rfind("dstn.", 0), 0u);
  }
  const Tile t = cfg.world().detection_tile(2);
  EXPECT_EQ(learned->embed(as_batch(t.image), t.boxes).shape(),
            frozen->embed(as_batch(t.image), t.boxes).shape());
}

TEST(FaceModel, EveryShareDepthTrainsAndEmbeds) {
  for (int depth = 0; depth <= 4; ++depth) {
    auto cfg = test::tiny_run_config();
    cfg.model.share_depth = depth;
    auto model = build_model(cfg);
    const Split split = make_run_split(cfg);
    auto sources = make_sources(cfg, split);
    std::mt19937_64 rng(depth);
    zero_grads(model->params());
    const auto l = model->train_pass(sources.at("casia")->sample(0, 0), cfg.casia, 1.0, rng);
    EXPECT_TRUE(std::isfinite(l.softmax)) << depth;
    EXPECT_GT(l.softmax, 0.0);
    const Tile t = cfg.world().detection_tile(0);
    EXPECT_EQ(model->embed(as_batch(t.image), t.boxes).dim(1), cfg.model.embed_dim);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto cfg = test::tiny_run_config(4);
  auto model = build_model(cfg);
  const Split split = make_run_split(cfg);
  Trainer trainer(*model, cfg.schedule(), cfg.solver, make_sources(cfg, split), cfg.sampling_seed());
  trainer.run(3);
  const Checkpoint ck = capture_checkpoint(*model, trainer.state());
  const auto path = temp_file("stnface_roundtrip.stnckpt");
  write_checkpoint(path, ck);
  const Checkpoint back = read_checkpoint(path);
  EXPECT_EQ(back.iter, 3u);
  ASSERT_EQ(back.tensors.size(), ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].first, ck.tensors[i].first);
    EXPECT_TRUE(bit_equal(back.tensors[i].second, ck.tensors[i].second)) << ck.tensors[i].first;
  }
  EXPECT_NE(back.find("recog.centers"), nullptr);
  EXPECT_NE(back.find("snet.fc.weight.momentum"), nullptr);

  auto fresh = build_model(cfg);
  OptimizerState opt;
  restore_checkpoint(back, *fresh, opt);
  EXPECT_EQ(parameter_hash(*fresh), parameter_hash(*model));
  EXPECT_EQ(opt.iter, 3u);
  for (const auto& [name, v] : trainer.state().velocity) EXPECT_TRUE(bit_equal(opt.velocity.at(name), v));
  fs::remove(path);
}

TEST(Checkpoint, ShapeMismatchIsStateMismatch) {
  auto cfg = test::tiny_run_config();
  auto model = build_model(cfg);
  OptimizerState opt;
  const Checkpoint ck = capture_checkpoint(*model, opt);

  auto other = cfg;
  other.model.embed_dim = 24;
  auto m2 = build_model(other);
  EXPECT_THROW(restore_checkpoint(ck, *m2, opt), StateMismatch);

  auto deeper = cfg;
  deeper.model.share_depth = 2;
  auto m3 = build_model(deeper);
  EXPECT_THROW(restore_checkpoint(ck, *m3, opt), StateMismatch);

  Checkpoint missing = ck;
  missing.tensors.erase(missing.tensors.begin());
  EXPECT_THROW(restore_checkpoint(missing, *model, opt), StateMismatch);

  Checkpoint extra = ck;
  extra.tensors.emplace_back("bogus.weight", Tensor({1}));
  EXPECT_THROW(restore_checkpoint(extra, *model, opt), StateMismatch);
}

TEST(Checkpoint, FailedRestoreLeavesModelUntouched) {
  auto cfg = test::tiny_run_config();
  auto model = build_model(cfg);
  OptimizerState opt;
  Checkpoint ck = capture_checkpoint(*model, opt);
  for (auto& [name, t] : ck.tensors) t.fill(0.5f);
  ck.tensors.back().second = Tensor({3});  // one bad shape at the very end
  const auto before = parameter_hash(*model);
  EXPECT_THROW(restore_checkpoint(ck, *model, opt), StateMismatch);
  EXPECT_EQ(parameter_hash(*model), before);
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto path = temp_file("stnface_corrupt.stnckpt");
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTACKPT";
  }
  EXPECT_THROW(read_checkpoint(path), InputError);

  Checkpoint ck;
  ck.tensors.emplace_back("a", Tensor({2, 3}, 1.f));
  ck.iter = 9;
  write_checkpoint(path, ck);
  fs::resize_file(path, fs::file_size(path) - 3);
  EXPECT_THROW(read_checkpoint(path), InputError);
  EXPECT_THROW(read_checkpoint(temp_file("stnface_does_not_exist.stnckpt")), InputError);
  fs::remove(path);
}

}  // namespace
}  // namespace stnface
