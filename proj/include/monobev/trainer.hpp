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

#pragma once

// Training orchestration: the masking curriculum and learning-rate schedule
// per epoch, dual forward passes for the reconstruction loss, the angular
// ground-truth filter in the fully masked phase, AdamW updates, held-out
// evaluation with front-camera-only input, checkpoints and the JSON-lines
// log.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "monobev/bevmodel.hpp"
#include "monobev/checkpoint.hpp"
#include "monobev/losses.hpp"
#include "monobev/maskcurriculum.hpp"
#include "monobev/metrics.hpp"
#include "monobev/synthscene.hpp"

namespace monobev {

enum class TrainMode { kOurs, kBaseline1Cam, kBaseline6Cam, kAblation };

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

// The three switchable features; only read in ablation mode.
struct FeatureFlags {
  bool inverse_block_masking = true;
  bool cyclic_lr = true;
  bool reconstruction_loss = true;

  bool operator==(const FeatureFlags&) const = default;
};

struct OptimizerSpec {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 35.0;
};

struct TrainConfig {
  TrainMode mode = TrainMode::kOurs;
  FeatureFlags features;
  int epochs = 30;
  int batch_size = 1;
  std::uint64_t seed = 0;
  std::string dataset;
  int steps_per_epoch = 0;  // 0: every training sample once per epoch

  MaskScheduleSpec mask;
  int block_size = 3;
  bool shared_ratio = false;  // one sampled ratio for all masked cameras
  float mask_fill = 0.0f;
  LrScheduleSpec lr;
  OptimizerSpec optimizer;

  FovFilterSpec fov;
  bool train_gt_filter = true;
  int gt_filter_from_epoch = 20;
  bool eval_fov_filter = true;
  int eval_every = 1;        // epochs; 0 disables per-epoch evaluation
  int eval_max_frames = 0;   // 0: every held-out frame
  int eval_top_k = 100;

  // Model dimensions; image size and grid come from the dataset.
  int patch_size = 8;
  int feat_dim = 32;
  int num_heads = 4;
  int num_points = 4;
  int num_layers = 3;
  int ffn_dim = 64;
  PillarSpec pillars;
  bool detach_history = true;

  DetLossWeights det_loss;
  MatchCostWeights match_cost;
  double lambda_rec = 1.0;

  void validate() const;
};

// Unknown keys anywhere raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig load_train_config(const std::filesystem::path& path);

// What a configuration switches on after resolving its mode.
struct RunPlan {
  bool masking = false;        // curriculum masks on non-front cameras
  bool inverse_block = false;  // otherwise random patch masks
  bool cyclic_lr = false;      // otherwise one cosine decay
  bool reconstruction = false;
  bool front_only = false;     // non-front cameras always fully masked
};

RunPlan resolve_plan(const TrainConfig& config);

// Masking state reported for `epoch` under `plan`.
MaskScheduleState effective_mask_state(const TrainConfig& config,
                                       const RunPlan& plan, int epoch);

// Learning rate at a step under `plan`.
double effective_lr(const TrainConfig& config, const RunPlan& plan, int epoch,
                    int step_in_epoch, int steps_per_epoch);

// True when detection targets are restricted to the front field of view.
bool gt_filter_active(const TrainConfig& config, const MaskScheduleState& state);

ModelConfig model_config_for(const TrainConfig& config, const CameraRig& rig,
                             const BevGridSpec& grid);

// Decoupled weight decay on ".weight" parameters, global-norm clipping.
class AdamW {
 public:
  explicit AdamW(OptimizerSpec spec) : spec_(spec) {}

  // Returns the gradient norm before clipping.
  double step(ParameterStore& params, double lr);

  long steps() const { return t_; }
  void store(Checkpoint& ckpt) const;
  void restore(const Checkpoint& ckpt, const ParameterStore& params);

 private:
  OptimizerSpec spec_;
  long t_ = 0;
  std::map<std::string, ad::Tensor> m_, v_;
};

struct SampleRef {
  int scene = 0;
  int anchor = 0;
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  int step_in_epoch = 0;
  double lr = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double loss = 0.0;
  double det_cls = 0.0, det_center = 0.0, det_size = 0.0, det_yaw = 0.0,
         det_velocity = 0.0;
  double seg = 0.0;
  double rec = 0.0;
  double grad_norm = 0.0;
  int num_targets = 0;
  bool gt_filter = false;
  std::uint64_t forward_passes = 0;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  bool front_only = true;
  std::optional<FovFilterSpec> fov = FovFilterSpec{};
  int top_k = 100;
  int max_frames = 0;
  bool feature_gap = false;
};

struct EvalResult {
  EvalReport report;
  // Mean squared distance between the masked-input BEV state and the same
  // model's unmasked six-camera BEV state; set when requested.
  std::optional<double> feature_gap;
  int frames = 0;
};

// Decoded outputs of one anchor frame.
struct FramePrediction {
  int scene = 0;  // dataset scene index
  int frame = 0;
  std::vector<ScoredBox> boxes;
  std::vector<Mask2d> segmentation;
  std::optional<double> feature_gap;
};

struct SceneRef {
  int index = 0;
  const SceneSequence* scene = nullptr;
};

// Two-consecutive-frame inference over every frame of the given scenes, or
// an evenly strided subset of max_frames of them.
std::vector<FramePrediction> run_inference(const BevModel& model,
                                           const std::vector<SceneRef>& scenes,
                                           const EvalOptions& options);

// Scores predictions against the ground truth of the referenced frames.
EvalResult score_predictions(const std::vector<FramePrediction>& predictions,
                             const std::vector<SceneSequence>& scenes,
                             const std::optional<FovFilterSpec>& fov);

EvalResult evaluate_model(const BevModel& model,
                          const std::vector<SceneSequence>& scenes,
                          const std::vector<int>& scene_indices,
                          const EvalOptions& options);

// Prediction directory: DIR/predictions.json holding one entry per frame
// with its scene, frame, scored boxes and thresholded masks.
void save_predictions(const std::filesystem::path& dir,
                      const std::vector<FramePrediction>& predictions);
std::vector<FramePrediction> load_predictions(const std::filesystem::path& dir);

struct RunOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::optional<std::filesystem::path> resume;
  std::optional<long> stop_at_step;  // halt before this global step
  std::function<void(const nlohmann::json&)> on_log;
  bool save_epoch_checkpoints = false;
  bool save_final_checkpoint = true;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<nlohmann::json> evals;  // one entry per evaluated epoch
  std::optional<std::filesystem::path> final_checkpoint;
  bool completed = false;  // false when stopped early
};

class Trainer {
 public:
  // `scenes` must outlive the trainer.
  Trainer(TrainConfig config, const std::vector<SceneSequence>& scenes);

  const TrainConfig& config() const { return config_; }
  const RunPlan& plan() const { return plan_; }
  BevModel& model() { return model_; }
  const BevModel& model() const { return model_; }

  const std::vector<SampleRef>& train_samples() const { return train_; }
  const std::vector<int>& validation_scenes() const { return val_; }
  int steps_per_epoch() const;

  // Sample order of an epoch, a pure function of (seed, epoch).
  std::vector<SampleRef> epoch_order(int epoch) const;

  // Losses and gradients for one batch at (epoch, step_in_epoch); consumes
  // the training RNG but does not update weights.
  StepRecord forward_backward(const std::vector<SampleRef>& batch, int epoch,
                              int step_in_epoch);
  // forward_backward followed by one AdamW update.
  StepRecord train_step(const std::vector<SampleRef>& batch, int epoch,
                        int step_in_epoch);

  EvalResult evaluate(const EvalOptions& options) const;
  EvalOptions default_eval_options() const;

  TrainResult run(const RunOptions& options);

  void save(const std::filesystem::path& path) const;
  void restore(const std::filesystem::path& path);

  long global_step() const { return global_step_; }
  int epoch() const { return epoch_; }
  int step_in_epoch() const { return step_in_epoch_; }

 private:
  std::vector<std::optional<PatchMask>> sample_masks(const MaskScheduleState& state);

  TrainConfig config_;
  RunPlan plan_;
  const std::vector<SceneSequence>* scenes_;
  CameraRig rig_;
  BevGridSpec grid_;
  BevModel model_;
  AdamW optimizer_;
  Rng rng_;
  std::vector<SampleRef> train_;
  std::vector<int> val_;
  long global_step_ = 0;
  int epoch_ = 0;
  int step_in_epoch_ = 0;
  std::vector<nlohmann::json> evals_;
};

// Loads `config.dataset` and trains.
TrainResult run_training(const TrainConfig& config, const RunOptions& options);

struct AblationRow {
  FeatureFlags flags;
  std::optional<EvalReport> report;
  std::optional<double> feature_gap;
  std::string error;
};

// Column order of the ablation table.
const std::vector<std::string>& ablation_columns();

// All eight feature combinations in table order (inverse block masking
// toggles fastest), sharing seeds; a failing row records its error and the
// grid continues.
std::vector<AblationRow> run_ablation_grid(const TrainConfig& base,
                                           const std::vector<SceneSequence>& scenes,
                                           const RunOptions& options);

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);

}  // namespace monobev
