/* Copyright 2026 The monobev Authors.

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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "monobev/errors.hpp"
#include "monobev/trainer.hpp"

namespace monobev {
namespace {

namespace fs = std::filesystem;

const std::vector<SceneSequence>& tiny_dataset() {
  static const std::vector<SceneSequence> scenes = [] {
    DatasetSpec ds;
    ds.seed = 5;
    ds.num_scenes = 5;
    ds.scene_template.duration_s = 2.0;
    ds.scene_template.num_actors = 6;
    ds.rig.image_height = 32;
    ds.rig.image_width = 48;
    ds.grid.rows = ds.grid.cols = 10;
    ds.grid.extent = 40.0;
    ds.grid.embed_dim = 8;
    return generate_dataset(ds);
  }();
  return scenes;
}

TrainConfig tiny_config(TrainMode mode = TrainMode::kOurs) {
  TrainConfig c;
  c.mode = mode;
  c.feat_dim = 8;
  c.num_heads = 2;
  c.num_points = 2;
  c.num_layers = 1;
  c.ffn_dim = 16;
  c.pillars.num_heights = 2;
  c.eval_every = 0;
  c.eval_max_frames = 2;
  c.seed = 3;
  return c;
}

// Three one-epoch phases: unmasked, half masked, fully masked.
TrainConfig compressed(TrainConfig c) {
  c.mask.cycle_epochs = c.lr.cycle_epochs = 1;
  c.mask.num_cycles = c.lr.num_cycles = 2;
  c.mask.final_phase_epochs = c.lr.final_phase_epochs = 1;
  c.epochs = 3;
  c.steps_per_epoch = 2;
  c.gt_filter_from_epoch = 2;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() /
                       ("monobev_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(TrainConfigJson, RoundTrip) {
  TrainConfig c = tiny_config(TrainMode::kAblation);
  c.features.cyclic_lr = false;
  c.lambda_rec = 0.5;
  c.fov.tolerance_deg = 20.0;
  c.dataset = "data/x";
  const nlohmann::json j = train_config_to_json(c);
  EXPECT_EQ(train_config_to_json(train_config_from_json(j)), j);
  EXPECT_EQ(j.at("mode"), "ablation");
  EXPECT_EQ(j.at("gt_filter").at("from_epoch"), 20);
}

TEST(TrainConfigJson, PartialDocumentsKeepDefaults) {
  const TrainConfig c = train_config_from_json(nlohmann::json::parse(R"({"epochs": 12})"));
  EXPECT_EQ(c.epochs, 12);
  EXPECT_EQ(c.mode, TrainMode::kOurs);
  EXPECT_DOUBLE_EQ(c.lr.peak_lr, 2e-4);
}

TEST(TrainConfigJson, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(train_config_from_json({{"epoch", 3}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"lr", {{"peak", 1e-3}}}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"mode", "ours_v2"}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"epochs", "ten"}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"epochs", 31}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"mask", {{"cycle_epochs", 0}}}}), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::array()), ConfigError);
}

TEST(TrainConfigJson, FileLoading) {
  const fs::path dir = scratch_dir("config");
  std::ofstream(dir / "good.json") << R"({"mode": "baseline_1cam", "seed": 4})";
  std::ofstream(dir / "bad.json") << R"({"mode": )";
  EXPECT_EQ(load_train_config(dir / "good.json").mode, TrainMode::kBaseline1Cam);
  EXPECT_THROW(load_train_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_train_config(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}

TEST(RunPlan, ModesResolveToFeatureSets) {
  const RunPlan ours = resolve_plan(tiny_config(TrainMode::kOurs));
  EXPECT_TRUE(ours.masking && ours.inverse_block && ours.cyclic_lr && ours.reconstruction);
  EXPECT_FALSE(ours.front_only);
  const RunPlan one = resolve_plan(tiny_config(TrainMode::kBaseline1Cam));
  EXPECT_TRUE(one.front_only);
  EXPECT_FALSE(one.masking || one.cyclic_lr || one.reconstruction);
  const RunPlan six = resolve_plan(tiny_config(TrainMode::kBaseline6Cam));
  EXPECT_FALSE(six.masking || six.front_only || six.cyclic_lr || six.reconstruction);
  TrainConfig ab = tiny_config(TrainMode::kAblation);
  ab.features = {false, true, false};
  const RunPlan cyc = resolve_plan(ab);
  EXPECT_TRUE(cyc.masking);
  EXPECT_FALSE(cyc.inverse_block);
  EXPECT_TRUE(cyc.cyclic_lr);
  EXPECT_FALSE(cyc.reconstruction);
}

TEST(RunPlan, MaskStateAndGtFilterPerMode) {
  const TrainConfig ours = tiny_config(TrainMode::kOurs);
  const TrainConfig one = tiny_config(TrainMode::kBaseline1Cam);
  const TrainConfig six = tiny_config(TrainMode::kBaseline6Cam);
  for (int e = 0; e < 30; ++e) {
    EXPECT_EQ(effective_mask_state(ours, resolve_plan(ours), e), mask_schedule(e));
    EXPECT_EQ(effective_mask_state(one, resolve_plan(one), e), (MaskScheduleState{e, 1.0, 0.0}));
    EXPECT_EQ(effective_mask_state(six, resolve_plan(six), e), (MaskScheduleState{e, 0.0, 0.0}));
    const bool filter = gt_filter_active(ours, effective_mask_state(ours, resolve_plan(ours), e));
    EXPECT_EQ(filter, e >= 20) << e;
    // The single-camera baseline is fully masked from the start, but the
    // filter still waits for the final phase.
    EXPECT_EQ(gt_filter_active(one, effective_mask_state(one, resolve_plan(one), e)), e >= 20);
    EXPECT_FALSE(gt_filter_active(six, effective_mask_state(six, resolve_plan(six), e)));
  }
  TrainConfig off = ours;
  off.train_gt_filter = false;
  EXPECT_FALSE(gt_filter_active(off, {25, 1.0, 0.0}));
  EXPECT_THROW(effective_mask_state(ours, resolve_plan(ours), 30), ValidationError);
}

TEST(RunPlan, LearningRateFollowsThePlan) {
  const TrainConfig ours = tiny_config(TrainMode::kOurs);
  const TrainConfig six = tiny_config(TrainMode::kBaseline6Cam);
  EXPECT_EQ(effective_lr(ours, resolve_plan(ours), 6, 3, 10), cyclic_lr(6, 3, 10));
  EXPECT_EQ(effective_lr(six, resolve_plan(six), 6, 3, 10), cosine_lr(6, 3, 10));
}

TEST(AdamWTest, DecaysOnlyWeightMatrices) {
  ParameterStore params;
  params.add("fc.weight", ad::Tensor::Constant(2, 2, 1.0));
  params.add("fc.bias", ad::Tensor::Constant(1, 2, 1.0));
  params.add("norm.gamma", ad::Tensor::Constant(1, 2, 1.0));
  AdamW opt(OptimizerSpec{});
  EXPECT_EQ(opt.step(params, 0.1), 0.0);  // no gradients arrived
  EXPECT_TRUE((params.get("fc.weight").value().array() == 1.0 - 0.1 * 0.01).all());
  EXPECT_TRUE((params.get("fc.bias").value().array() == 1.0).all());
  EXPECT_TRUE((params.get("norm.gamma").value().array() == 1.0).all());
  EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamWTest, FirstStepMovesByLearningRateAndReportsRawNorm) {
  ParameterStore params;
  ad::Var& b = params.add("x.bias", ad::Tensor::Zero(1, 2));
  ad::backward(ad::sum(ad::scale(b, 300.0)));  // gradient norm 300 * sqrt 2
  AdamW opt(OptimizerSpec{});
  EXPECT_NEAR(opt.step(params, 0.01), 300.0 * std::sqrt(2.0), 1e-9);
  // Bias-corrected Adam moves each entry by lr regardless of clipping.
  EXPECT_NEAR(b.value()(0, 0), -0.01, 1e-9);
  EXPECT_NEAR(b.value()(0, 1), -0.01, 1e-9);
}

TEST(TrainerTest, SplitAndEpochOrder) {
  const Trainer t(tiny_config(), tiny_dataset());
  EXPECT_EQ(t.validation_scenes(), std::vector<int>{4});
  for (const SampleRef& s : t.train_samples()) EXPECT_NE(s.scene, 4);
  const auto a = t.epoch_order(3);
  const auto b = t.epoch_order(3);
  ASSERT_EQ(a.size(), t.train_samples().size());
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), [](auto& x, auto& y) {
    return x.scene == y.scene && x.anchor == y.anchor;
  }));
  const auto c = t.epoch_order(4);
  EXPECT_FALSE(std::equal(a.begin(), a.end(), c.begin(), [](auto& x, auto& y) {
    return x.scene == y.scene && x.anchor == y.anchor;
  }));
}

TEST(TrainerTest, ReconstructionNeedsASecondForwardPass) {
  Trainer ours(tiny_config(TrainMode::kOurs), tiny_dataset());
  Trainer six(tiny_config(TrainMode::kBaseline6Cam), tiny_dataset());
  const std::vector<SampleRef> batch{ours.train_samples()[3]};
  EXPECT_EQ(ours.forward_backward(batch, 10, 0).forward_passes, 2u);
  EXPECT_EQ(six.forward_backward(batch, 10, 0).forward_passes, 1u);
}

TEST(TrainerTest, ZeroReconstructionWeightLeavesGradientsUnchanged) {
  TrainConfig with = tiny_config(TrainMode::kOurs);
  with.lambda_rec = 0.0;
  TrainConfig without = tiny_config(TrainMode::kAblation);
  without.features = {true, true, false};
  Trainer a(with, tiny_dataset()), b(without, tiny_dataset());
  const std::vector<SampleRef> batch{a.train_samples()[5], a.train_samples()[9]};
  const StepRecord ra = a.forward_backward(batch, 13, 1);
  const StepRecord rb = b.forward_backward(batch, 13, 1);
  EXPECT_GT(ra.rec, 0.0);
  EXPECT_EQ(rb.rec, 0.0);
  EXPECT_DOUBLE_EQ(ra.loss, rb.loss);
  for (const auto& name : a.model().params().names()) {
    EXPECT_EQ(a.model().params().get(name).grad(), b.model().params().get(name).grad()) << name;
  }
}

TEST(TrainerTest, FinalPhaseFiltersTargetsToTheFrontSector) {
  Trainer t(tiny_config(TrainMode::kOurs), tiny_dataset());
  const auto& scenes = tiny_dataset();
  std::optional<SampleRef> pick;
  for (const SampleRef& s : t.train_samples()) {
    const auto& boxes = scenes[static_cast<std::size_t>(s.scene)].frames[static_cast<std::size_t>(s.anchor)].boxes;
    if (filter_gt_boxes(boxes).size() < boxes.size()) {
      pick = s;
      break;
    }
  }
  ASSERT_TRUE(pick) << "dataset has no box outside the front sector";
  const auto& boxes = scenes[static_cast<std::size_t>(pick->scene)].frames[static_cast<std::size_t>(pick->anchor)].boxes;
  const StepRecord late = t.forward_backward({*pick}, 25, 0);
  EXPECT_TRUE(late.gt_filter);
  EXPECT_EQ(late.num_targets, static_cast<int>(filter_gt_boxes(boxes).size()));
  const StepRecord early = t.forward_backward({*pick}, 19, 0);
  EXPECT_FALSE(early.gt_filter);
  EXPECT_EQ(early.num_targets, static_cast<int>(boxes.size()));
}

TEST(TrainerTest, RunWritesLogAndCheckpoints) {
  TrainConfig c = compressed(tiny_config());
  c.eval_every = 1;
  const fs::path dir = scratch_dir("run");
  Trainer t(c, tiny_dataset());
  RunOptions o;
  o.out_dir = dir;
  int logged = 0;
  o.on_log = [&](const nlohmann::json&) { ++logged; };
  const TrainResult r = t.run(o);
  EXPECT_TRUE(r.completed);
  EXPECT_EQ(r.steps.size(), 6u);
  EXPECT_EQ(r.evals.size(), 3u);
  EXPECT_EQ(logged, 9);
  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.at("type") == "step" || j.at("type") == "eval");
    ++lines;
  }
  EXPECT_EQ(lines, 9);
  EXPECT_TRUE(fs::exists(dir / "final.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  EXPECT_EQ(r.steps[4].mu, 1.0);
  EXPECT_TRUE(r.steps[4].gt_filter);
  EXPECT_FALSE(r.steps[2].gt_filter);
  for (const char* key : {"step", "epoch", "lr", "mu", "sigma", "loss_total", "loss_det_cls",
                          "loss_seg", "loss_rec", "grad_norm", "num_targets", "gt_filter",
                          "forward_passes"}) {
    EXPECT_TRUE(r.steps[0].to_json().contains(key)) << key;
  }

  Trainer restored(c, tiny_dataset());
  restored.restore(dir / "final.ckpt");
  EXPECT_EQ(restored.global_step(), 6);
  EXPECT_EQ(restored.epoch(), 3);
  for (const auto& name : t.model().params().names()) {
    EXPECT_EQ(restored.model().params().get(name).value(), t.model().params().get(name).value());
  }
  TrainConfig other = c;
  other.feat_dim = 16;
  Trainer mismatched(other, tiny_dataset());
  EXPECT_THROW(mismatched.restore(dir / "final.ckpt"), ValidationError);
  fs::remove_all(dir);
}

TEST(TrainerTest, DivergenceStopsAndKeepsTheState) {
  TrainConfig c = compressed(tiny_config());
  c.lambda_rec = std::numeric_limits<double>::infinity();
  const fs::path dir = scratch_dir("diverge");
  Trainer t(c, tiny_dataset());
  RunOptions o;
  o.out_dir = dir;
  EXPECT_THROW(t.run(o), DivergenceError);
  EXPECT_TRUE(fs::exists(dir / "diverged.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "final.ckpt"));
  fs::remove_all(dir);
}

TEST(Predictions, SaveLoadRoundTrip) {
  const Trainer t(tiny_config(), tiny_dataset());
  const auto& scenes = tiny_dataset();
  EvalOptions eo = t.default_eval_options();
  eo.max_frames = 3;
  eo.top_k = 5;
  const auto preds = run_inference(t.model(), {{4, &scenes[4]}}, eo);
  ASSERT_EQ(preds.size(), 3u);
  const fs::path dir = scratch_dir("preds");
  save_predictions(dir, preds);
  const auto back = load_predictions(dir);
  ASSERT_EQ(back.size(), preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(back[i].scene, preds[i].scene);
    EXPECT_EQ(back[i].frame, preds[i].frame);
    ASSERT_EQ(back[i].boxes.size(), 5u);
    for (std::size_t k = 0; k < 5; ++k) {
      EXPECT_EQ(back[i].boxes[k].box, preds[i].boxes[k].box);
      EXPECT_EQ(back[i].boxes[k].score, preds[i].boxes[k].score);
    }
    ASSERT_EQ(back[i].segmentation.size(), preds[i].segmentation.size());
    for (std::size_t k = 0; k < preds[i].segmentation.size(); ++k) {
      EXPECT_TRUE((back[i].segmentation[k] == preds[i].segmentation[k]).all());
    }
  }
  // Scoring the reloaded file gives the same report as scoring in memory.
  const EvalResult a = score_predictions(preds, scenes, FovFilterSpec{});
  const EvalResult b = score_predictions(back, scenes, FovFilterSpec{});
  EXPECT_EQ(a.report.nds, b.report.nds);
  EXPECT_EQ(a.report.miou, b.report.miou);
  EXPECT_THROW(load_predictions(dir / "nope"), IoError);
  fs::remove_all(dir);
}

TEST(Ablation, EightRowsWithTheUnmaskedRunFirst) {
  const TrainConfig base = compressed(tiny_config());
  const auto rows = run_ablation_grid(base, tiny_dataset(), RunOptions{});
  ASSERT_EQ(rows.size(), 8u);
  for (int k = 0; k < 8; ++k) {
    EXPECT_TRUE(rows[k].error.empty()) << rows[k].error;
    EXPECT_EQ(rows[k].flags, (FeatureFlags{(k & 1) != 0, (k & 2) != 0, (k & 4) != 0}));
  }
  TrainConfig six = base;
  six.mode = TrainMode::kBaseline6Cam;
  Trainer t(six, tiny_dataset());
  t.run(RunOptions{});
  EvalOptions eo = t.default_eval_options();
  eo.feature_gap = true;
  const EvalResult er = t.evaluate(eo);
  EXPECT_EQ(rows[0].report->nds, er.report.nds);
  EXPECT_EQ(rows[0].report->miou, er.report.miou);
  EXPECT_EQ(rows[0].feature_gap, er.feature_gap);

  const nlohmann::json j = ablation_to_json(rows);
  EXPECT_EQ(j.at("columns"), nlohmann::json(ablation_columns()));
  EXPECT_EQ(ablation_columns().front(), "inverse_block_masking");
  EXPECT_EQ(ablation_columns().at(3), "NDS");
  ASSERT_EQ(j.at("rows").size(), 8u);
  EXPECT_EQ(j.at("rows")[5].size(), ablation_columns().size());
  EXPECT_EQ(j.at("rows")[5][0], true);
  EXPECT_EQ(j.at("rows")[5][1], false);
  EXPECT_EQ(j.at("rows")[5][2], true);
}

}  // namespace
}  // namespace monobev
