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

#include "monobev/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "monobev/errors.hpp"
#include "monobev/fileio.hpp"

namespace monobev {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- configuration ------------------------------------------------------------

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kOurs: return "ours";
    case TrainMode::kBaseline1Cam: return "baseline_1cam";
    case TrainMode::kBaseline6Cam: return "baseline_6cam";
    case TrainMode::kAblation: return "ablation";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  for (TrainMode m : {TrainMode::kOurs, TrainMode::kBaseline1Cam,
                      TrainMode::kBaseline6Cam, TrainMode::kAblation}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + s +
                    "' (expected ours, baseline_1cam, baseline_6cam, ablation)");
}

namespace {

// Reads fields of one JSON object and rejects any key it was not asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  std::optional<ObjectReader> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return ObjectReader(j_.at(key), path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + path_ + "." + key);
    }
  }

 private:
  std::string where() const { return path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(epochs >= 1 && epochs <= mask.total_epochs(),
          "epochs must lie in [1, " + std::to_string(mask.total_epochs()) + "]");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(steps_per_epoch >= 0, "steps_per_epoch must be >= 0");
  require(mask.cycle_epochs >= 1 && mask.num_cycles >= 1 && mask.final_phase_epochs >= 1,
          "mask schedule phases must be positive");
  require(lr.cycle_epochs == mask.cycle_epochs && lr.num_cycles == mask.num_cycles &&
              lr.final_phase_epochs == mask.final_phase_epochs,
          "learning-rate cycles must align with the masking schedule");
  require(block_size >= 1, "block_size must be >= 1");
  require(lambda_rec >= 0.0, "lambda_rec must be >= 0");
  require(gt_filter_from_epoch >= 0, "gt_filter.from_epoch must be >= 0");
  require(eval_every >= 0 && eval_max_frames >= 0 && eval_top_k >= 1,
          "eval settings out of range");
  require(optimizer.grad_clip > 0.0 && optimizer.weight_decay >= 0.0 &&
              optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 &&
              optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0 && optimizer.eps > 0.0,
          "optimizer settings out of range");
  require(match_cost.cls >= 0.0 && match_cost.center >= 0.0,
          "match cost weights must be non-negative");
  try {
    lr.validate();
    fov.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  ObjectReader root(j, "config");
  std::string mode = to_string(c.mode);
  root.read("mode", mode);
  c.mode = train_mode_from_string(mode);
  if (auto f = root.child("features")) {
    f->read("inverse_block_masking", c.features.inverse_block_masking);
    f->read("cyclic_lr", c.features.cyclic_lr);
    f->read("reconstruction_loss", c.features.reconstruction_loss);
    f->finish();
  }
  root.read("epochs", c.epochs);
  root.read("batch_size", c.batch_size);
  root.read("seed", c.seed);
  root.read("dataset", c.dataset);
  root.read("steps_per_epoch", c.steps_per_epoch);
  if (auto m = root.child("mask")) {
    m->read("cycle_epochs", c.mask.cycle_epochs);
    m->read("num_cycles", c.mask.num_cycles);
    m->read("final_phase_epochs", c.mask.final_phase_epochs);
    m->read("mu_step", c.mask.mu_step);
    m->read("sigma", c.mask.sigma);
    m->read("block_size", c.block_size);
    m->read("shared_ratio", c.shared_ratio);
    m->read("fill", c.mask_fill);
    m->finish();
  }
  c.lr.cycle_epochs = c.mask.cycle_epochs;
  c.lr.num_cycles = c.mask.num_cycles;
  c.lr.final_phase_epochs = c.mask.final_phase_epochs;
  if (auto l = root.child("lr")) {
    l->read("peak_lr", c.lr.peak_lr);
    l->read("floor_fraction", c.lr.floor_fraction);
    l->read("final_lr", c.lr.final_lr);
    l->finish();
  }
  if (auto o = root.child("optimizer")) {
    o->read("beta1", c.optimizer.beta1);
    o->read("beta2", c.optimizer.beta2);
    o->read("eps", c.optimizer.eps);
    o->read("weight_decay", c.optimizer.weight_decay);
    o->read("grad_clip", c.optimizer.grad_clip);
    o->finish();
  }
  if (auto g = root.child("gt_filter")) {
    g->read("aperture_deg", c.fov.aperture_deg);
    g->read("tolerance_deg", c.fov.tolerance_deg);
    g->read("train", c.train_gt_filter);
    g->read("from_epoch", c.gt_filter_from_epoch);
    g->finish();
  }
  if (auto e = root.child("eval")) {
    e->read("fov_filter", c.eval_fov_filter);
    e->read("every", c.eval_every);
    e->read("max_frames", c.eval_max_frames);
    e->read("top_k", c.eval_top_k);
    e->finish();
  }
  if (auto m = root.child("model")) {
    m->read("patch_size", c.patch_size);
    m->read("feat_dim", c.feat_dim);
    m->read("num_heads", c.num_heads);
    m->read("num_points", c.num_points);
    m->read("num_layers", c.num_layers);
    m->read("ffn_dim", c.ffn_dim);
    m->read("pillar_z_min", c.pillars.z_min);
    m->read("pillar_z_max", c.pillars.z_max);
    m->read("pillar_heights", c.pillars.num_heights);
    m->read("detach_history", c.detach_history);
    m->finish();
  }
  if (auto l = root.child("loss")) {
    l->read("lambda_rec", c.lambda_rec);
    l->read("cls", c.det_loss.cls);
    l->read("center", c.det_loss.center);
    l->read("size", c.det_loss.size);
    l->read("yaw", c.det_loss.yaw);
    l->read("velocity", c.det_loss.velocity);
    l->read("focal_alpha", c.det_loss.focal_alpha);
    l->read("focal_gamma", c.det_loss.focal_gamma);
    l->read("match_cls", c.match_cost.cls);
    l->read("match_center", c.match_cost.center);
    l->finish();
  }
  root.finish();
  c.validate();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {
      {"mode", to_string(c.mode)},
      {"features",
       {{"inverse_block_masking", c.features.inverse_block_masking},
        {"cyclic_lr", c.features.cyclic_lr},
        {"reconstruction_loss", c.features.reconstruction_loss}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"dataset", c.dataset},
      {"steps_per_epoch", c.steps_per_epoch},
      {"mask",
       {{"cycle_epochs", c.mask.cycle_epochs},
        {"num_cycles", c.mask.num_cycles},
        {"final_phase_epochs", c.mask.final_phase_epochs},
        {"mu_step", c.mask.mu_step},
        {"sigma", c.mask.sigma},
        {"block_size", c.block_size},
        {"shared_ratio", c.shared_ratio},
        {"fill", c.mask_fill}}},
      {"lr",
       {{"peak_lr", c.lr.peak_lr},
        {"floor_fraction", c.lr.floor_fraction},
        {"final_lr", c.lr.final_lr}}},
      {"optimizer",
       {{"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"weight_decay", c.optimizer.weight_decay},
        {"grad_clip", c.optimizer.grad_clip}}},
      {"gt_filter",
       {{"aperture_deg", c.fov.aperture_deg},
        {"tolerance_deg", c.fov.tolerance_deg},
        {"train", c.train_gt_filter},
        {"from_epoch", c.gt_filter_from_epoch}}},
      {"eval",
       {{"fov_filter", c.eval_fov_filter},
        {"every", c.eval_every},
        {"max_frames", c.eval_max_frames},
        {"top_k", c.eval_top_k}}},
      {"model",
       {{"patch_size", c.patch_size},
        {"feat_dim", c.feat_dim},
        {"num_heads", c.num_heads},
        {"num_points", c.num_points},
        {"num_layers", c.num_layers},
        {"ffn_dim", c.ffn_dim},
        {"pillar_z_min", c.pillars.z_min},
        {"pillar_z_max", c.pillars.z_max},
        {"pillar_heights", c.pillars.num_heights},
        {"detach_history", c.detach_history}}},
      {"loss",
       {{"lambda_rec", c.lambda_rec},
        {"cls", c.det_loss.cls},
        {"center", c.det_loss.center},
        {"size", c.det_loss.size},
        {"yaw", c.det_loss.yaw},
        {"velocity", c.det_loss.velocity},
        {"focal_alpha", c.det_loss.focal_alpha},
        {"focal_gamma", c.det_loss.focal_gamma},
        {"match_cls", c.match_cost.cls},
        {"match_center", c.match_cost.center}}},
  };
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

// ---- schedules ----------------------------------------------------------------

RunPlan resolve_plan(const TrainConfig& c) {
  RunPlan p;
  switch (c.mode) {
    case TrainMode::kOurs:
      p.masking = p.inverse_block = p.cyclic_lr = p.reconstruction = true;
      break;
    case TrainMode::kBaseline1Cam:
      p.front_only = true;
      break;
    case TrainMode::kBaseline6Cam:
      break;
    case TrainMode::kAblation: {
      const FeatureFlags& f = c.features;
      p.masking = f.inverse_block_masking || f.cyclic_lr || f.reconstruction_loss;
      p.inverse_block = f.inverse_block_masking;
      p.cyclic_lr = f.cyclic_lr;
      p.reconstruction = f.reconstruction_loss;
      break;
    }
  }
  return p;
}

MaskScheduleState effective_mask_state(const TrainConfig& c, const RunPlan& plan,
                                       int epoch) {
  if (epoch < 0 || epoch >= c.mask.total_epochs()) {
    throw ValidationError("epoch " + std::to_string(epoch) + " outside the schedule");
  }
  if (plan.front_only) return {epoch, 1.0, 0.0};
  if (plan.masking) return mask_schedule(epoch, c.mask);
  return {epoch, 0.0, 0.0};
}

double effective_lr(const TrainConfig& c, const RunPlan& plan, int epoch,
                    int step_in_epoch, int steps_per_epoch) {
  return plan.cyclic_lr ? cyclic_lr(epoch, step_in_epoch, steps_per_epoch, c.lr)
                        : cosine_lr(epoch, step_in_epoch, steps_per_epoch, c.lr);
}

bool gt_filter_active(const TrainConfig& c, const MaskScheduleState& state) {
  return c.train_gt_filter && state.epoch >= c.gt_filter_from_epoch && state.mu == 1.0;
}

ModelConfig model_config_for(const TrainConfig& c, const CameraRig& rig,
                             const BevGridSpec& grid) {
  ModelConfig m;
  m.grid = grid;
  m.pillars = c.pillars;
  m.image_height = rig.front().height;
  m.image_width = rig.front().width;
  m.patch_size = c.patch_size;
  m.feat_dim = c.feat_dim;
  m.num_heads = c.num_heads;
  m.num_points = c.num_points;
  m.num_layers = c.num_layers;
  m.ffn_dim = c.ffn_dim;
  m.detach_history = c.detach_history;
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

// ---- optimizer ----------------------------------------------------------------

namespace {

bool decays(const std::string& name) {
  return name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
}

}  // namespace

double AdamW::step(ParameterStore& params, double lr) {
  std::vector<ad::Tensor> grads;
  grads.reserve(params.size());
  double sq = 0.0;
  for (const std::string& name : params.names()) {
    grads.push_back(params.get(name).grad());
    sq += grads.back().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double clip = norm > spec_.grad_clip ? spec_.grad_clip / (norm + 1e-6) : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (const std::string& name : params.names()) {
    ad::Var p = params.get(name);
    ad::Tensor& w = p.mutable_value();
    const ad::Tensor g = grads[k++] * clip;
    auto [mit, _] = m_.try_emplace(name, ad::Tensor::Zero(w.rows(), w.cols()));
    auto [vit, __] = v_.try_emplace(name, ad::Tensor::Zero(w.rows(), w.cols()));
    ad::Tensor& m = mit->second;
    ad::Tensor& v = vit->second;
    m = spec_.beta1 * m + (1.0 - spec_.beta1) * g;
    v = spec_.beta2 * v + (1.0 - spec_.beta2) * g.cwiseProduct(g);
    if (decays(name)) w *= 1.0 - lr * spec_.weight_decay;
    w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + spec_.eps);
  }
  return norm;
}

void AdamW::store(Checkpoint& ckpt) const {
  ckpt.header["adam_steps"] = t_;
  for (const auto& [name, t] : m_) ckpt.tensors["adam_m/" + name] = t;
  for (const auto& [name, t] : v_) ckpt.tensors["adam_v/" + name] = t;
}

void AdamW::restore(const Checkpoint& ckpt, const ParameterStore& params) {
  t_ = ckpt.header.value("adam_steps", 0L);
  m_.clear();
  v_.clear();
  for (const std::string& name : params.names()) {
    auto m = ckpt.tensors.find("adam_m/" + name);
    auto v = ckpt.tensors.find("adam_v/" + name);
    if (m != ckpt.tensors.end()) m_[name] = m->second;
    if (v != ckpt.tensors.end()) v_[name] = v->second;
  }
}

// ---- records ----------------------------------------------------------------

json StepRecord::to_json() const {
  return {{"type", "step"},
          {"step", step},
          {"epoch", epoch},
          {"step_in_epoch", step_in_epoch},
          {"lr", lr},
          {"mu", mu},
          {"sigma", sigma},
          {"loss_total", loss},
          {"loss_det_cls", det_cls},
          {"loss_det_center", det_center},
          {"loss_det_size", det_size},
          {"loss_det_yaw", det_yaw},
          {"loss_det_velocity", det_velocity},
          {"loss_seg", seg},
          {"loss_rec", rec},
          {"grad_norm", grad_norm},
          {"num_targets", num_targets},
          {"gt_filter", gt_filter},
          {"forward_passes", forward_passes}};
}

// ---- evaluation ---------------------------------------------------------------

namespace {

std::vector<std::optional<PatchMask>> front_only_masks(const CameraRig& rig,
                                                       const ModelConfig& m) {
  std::vector<std::optional<PatchMask>> masks(rig.size());
  for (std::size_t c = 0; c < rig.size(); ++c) {
    if (c != rig.front_index()) masks[c] = PatchMask::full(m.patch_rows(), m.patch_cols());
  }
  return masks;
}

}  // namespace

std::vector<FramePrediction> run_inference(const BevModel& model,
                                           const std::vector<SceneRef>& scenes,
                                           const EvalOptions& options) {
  ad::NoGradGuard no_grad;
  std::vector<std::pair<SceneRef, int>> frames;
  for (const SceneRef& s : scenes) {
    for (int a = 0; a < static_cast<int>(s.scene->frames.size()); ++a) frames.emplace_back(s, a);
  }
  if (options.max_frames > 0 && static_cast<int>(frames.size()) > options.max_frames) {
    std::vector<std::pair<SceneRef, int>> picked;
    const double stride = static_cast<double>(frames.size()) / options.max_frames;
    for (int i = 0; i < options.max_frames; ++i) {
      picked.push_back(frames[static_cast<std::size_t>(std::floor(i * stride))]);
    }
    frames = std::move(picked);
  }

  std::vector<FramePrediction> out;
  Rng unused(0);
  for (const auto& [ref, anchor] : frames) {
    const SceneSequence& scene = *ref.scene;
    const std::vector<int> idx = temporal_sampler(
        static_cast<int>(scene.frames.size()), scene.spec.frame_hz, anchor,
        SamplerMode::kInfer, unused);
    std::vector<const FrameSample*> ptrs;
    for (int i : idx) ptrs.push_back(&scene.frames[static_cast<std::size_t>(i)]);
    std::vector<std::vector<std::optional<PatchMask>>> masks;
    if (options.front_only) {
      masks.assign(ptrs.size(), front_only_masks(scene.rig, model.config()));
    }
    const ForwardResult result = model.forward(ptrs, masks, scene.rig);
    FramePrediction fp;
    fp.scene = ref.index;
    fp.frame = anchor;
    fp.boxes = decode_detections(result.det, scene.grid, options.top_k);
    fp.segmentation = threshold_segmentation(result.seg, scene.grid);
    if (options.feature_gap) {
      const ForwardResult full = model.forward(ptrs, {}, scene.rig);
      fp.feature_gap = feature_reconstruction_loss(result.bev, full.bev).scalar();
    }
    out.push_back(std::move(fp));
  }
  return out;
}

EvalResult score_predictions(const std::vector<FramePrediction>& predictions,
                             const std::vector<SceneSequence>& scenes,
                             const std::optional<FovFilterSpec>& fov) {
  std::vector<ScoredBox> preds;
  std::vector<std::vector<GtBox>> gts;
  std::vector<std::vector<Mask2d>> seg_pred, seg_gt;
  double gap = 0.0;
  int gap_count = 0;
  for (const FramePrediction& fp : predictions) {
    if (fp.scene < 0 || fp.scene >= static_cast<int>(scenes.size()) || fp.frame < 0 ||
        fp.frame >= static_cast<int>(scenes[static_cast<std::size_t>(fp.scene)].frames.size())) {
      throw ValidationError("prediction refers to scene " + std::to_string(fp.scene) +
                            " frame " + std::to_string(fp.frame) +
                            " which the ground truth lacks");
    }
    const FrameSample& f =
        scenes[static_cast<std::size_t>(fp.scene)].frames[static_cast<std::size_t>(fp.frame)];
    const int sample = static_cast<int>(gts.size());
    for (ScoredBox b : fp.boxes) {
      b.sample = sample;
      preds.push_back(b);
    }
    gts.push_back(f.boxes);
    if (!fp.segmentation.empty()) {
      seg_pred.push_back(fp.segmentation);
      seg_gt.push_back(f.bev_seg);
    }
    if (fp.feature_gap) {
      gap += *fp.feature_gap;
      ++gap_count;
    }
  }
  if (!seg_pred.empty() && seg_pred.size() != predictions.size()) {
    throw ValidationError("segmentation missing for some predicted frames");
  }
  EvalResult r;
  r.frames = static_cast<int>(predictions.size());
  r.report = evaluate(preds, gts, seg_pred, seg_gt, fov);
  if (gap_count > 0) r.feature_gap = gap / gap_count;
  return r;
}

EvalResult evaluate_model(const BevModel& model, const std::vector<SceneSequence>& scenes,
                          const std::vector<int>& scene_indices,
                          const EvalOptions& options) {
  std::vector<SceneRef> refs;
  for (int i : scene_indices) refs.push_back({i, &scenes.at(static_cast<std::size_t>(i))});
  return score_predictions(run_inference(model, refs, options), scenes, options.fov);
}

void save_predictions(const fs::path& dir, const std::vector<FramePrediction>& predictions) {
  json frames = json::array();
  for (const FramePrediction& fp : predictions) {
    json boxes = json::array();
    for (const ScoredBox& b : fp.boxes) {
      json e = box_to_json(b.box);
      e["score"] = b.score;
      boxes.push_back(e);
    }
    json seg = json::array();
    for (const Mask2d& m : fp.segmentation) {
      std::vector<int> bits(static_cast<std::size_t>(m.size()));
      for (Eigen::Index i = 0; i < m.size(); ++i) bits[static_cast<std::size_t>(i)] = m.data()[i] > 0.5f;
      seg.push_back({{"rows", m.rows()}, {"cols", m.cols()}, {"bits", bits}});
    }
    json f = {{"scene", fp.scene}, {"frame", fp.frame}, {"boxes", boxes}, {"segmentation", seg}};
    if (fp.feature_gap) f["feature_gap"] = *fp.feature_gap;
    frames.push_back(f);
  }
  write_file_atomic(dir / "predictions.json",
                    json{{"format", "monobev-predictions"}, {"version", 1}, {"frames", frames}}.dump());
}

std::vector<FramePrediction> load_predictions(const fs::path& dir) {
  const json j = read_json_file(dir / "predictions.json");
  std::vector<FramePrediction> out;
  try {
    for (const json& f : j.at("frames")) {
      FramePrediction fp;
      fp.scene = f.at("scene").get<int>();
      fp.frame = f.at("frame").get<int>();
      for (const json& b : f.at("boxes")) {
        ScoredBox sb;
        sb.box = box_from_json(b);
        sb.score = b.at("score").get<double>();
        fp.boxes.push_back(sb);
      }
      for (const json& m : f.value("segmentation", json::array())) {
        Mask2d mask(m.at("rows").get<int>(), m.at("cols").get<int>());
        const auto bits = m.at("bits").get<std::vector<int>>();
        if (static_cast<Eigen::Index>(bits.size()) != mask.size()) {
          throw ValidationError("segmentation bit count does not match its shape");
        }
        for (Eigen::Index i = 0; i < mask.size(); ++i) {
          mask.data()[i] = bits[static_cast<std::size_t>(i)] ? 1.0f : 0.0f;
        }
        fp.segmentation.push_back(std::move(mask));
      }
      if (f.contains("feature_gap")) fp.feature_gap = f.at("feature_gap").get<double>();
      out.push_back(std::move(fp));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("predictions: ") + e.what());
  }
  return out;
}

// ---- trainer ------------------------------------------------------------------

namespace {

const std::vector<SceneSequence>& checked_scenes(const std::vector<SceneSequence>& scenes) {
  if (scenes.empty()) throw ValidationError("trainer: dataset has no scenes");
  for (const SceneSequence& s : scenes) {
    if (!(s.rig == scenes.front().rig) || !(s.grid == scenes.front().grid)) {
      throw ValidationError("trainer: scenes disagree on rig or grid");
    }
    if (s.frames.empty()) throw ValidationError("trainer: scene without frames");
  }
  return scenes;
}

TrainConfig validated(TrainConfig c) {
  c.validate();
  return c;
}

}  // namespace

Trainer::Trainer(TrainConfig config, const std::vector<SceneSequence>& scenes)
    : config_(validated(std::move(config))),
      plan_(resolve_plan(config_)),
      scenes_(&checked_scenes(scenes)),
      rig_(scenes.front().rig),
      grid_(scenes.front().grid),
      model_(model_config_for(config_, rig_, grid_), config_.seed),
      optimizer_(config_.optimizer) {
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed),
                    static_cast<std::uint32_t>(config_.seed >> 32), 1u};
  rng_.seed(seq);
  for (int s = 0; s < static_cast<int>(scenes.size()); ++s) {
    if (is_validation_scene(s)) {
      val_.push_back(s);
      continue;
    }
    for (int a = 0; a < static_cast<int>(scenes[static_cast<std::size_t>(s)].frames.size()); ++a) {
      train_.push_back({s, a});
    }
  }
  if (train_.empty()) throw ValidationError("trainer: no training scenes");
}

int Trainer::steps_per_epoch() const {
  const int full = (static_cast<int>(train_.size()) + config_.batch_size - 1) /
                   config_.batch_size;
  return config_.steps_per_epoch > 0 ? std::min(full, config_.steps_per_epoch) : full;
}

std::vector<SampleRef> Trainer::epoch_order(int epoch) const {
  std::vector<SampleRef> order = train_;
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed),
                    static_cast<std::uint32_t>(config_.seed >> 32), 2u,
                    static_cast<std::uint32_t>(epoch)};
  Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::optional<PatchMask>> Trainer::sample_masks(const MaskScheduleState& state) {
  const ModelConfig& m = model_.config();
  std::vector<std::optional<PatchMask>> masks(rig_.size());
  if (!plan_.masking && !plan_.front_only) return masks;
  const double shared = config_.shared_ratio && plan_.masking ? sample_ratio(state, rng_) : 0.0;
  for (std::size_t c = 0; c < rig_.size(); ++c) {
    if (c == rig_.front_index()) continue;
    if (plan_.front_only) {
      masks[c] = PatchMask::full(m.patch_rows(), m.patch_cols());
      continue;
    }
    const double ratio = config_.shared_ratio ? shared : sample_ratio(state, rng_);
    masks[c] = plan_.inverse_block
                   ? inverse_block_mask(m.patch_rows(), m.patch_cols(), ratio,
                                        config_.block_size, rng_)
                   : random_patch_mask(m.patch_rows(), m.patch_cols(), ratio, rng_);
  }
  return masks;
}

StepRecord Trainer::forward_backward(const std::vector<SampleRef>& batch, int epoch,
                                     int step_in_epoch) {
  if (batch.empty()) throw ValidationError("train step: empty batch");
  StepRecord rec;
  rec.epoch = epoch;
  rec.step_in_epoch = step_in_epoch;
  const MaskScheduleState state = effective_mask_state(config_, plan_, epoch);
  rec.mu = state.mu;
  rec.sigma = state.sigma;
  rec.lr = effective_lr(config_, plan_, epoch, step_in_epoch, steps_per_epoch());
  rec.gt_filter = gt_filter_active(config_, state);
  const std::uint64_t passes_before = model_.forward_count();

  model_.params().zero_grad();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::optional<ad::Var> total;
  for (const SampleRef& ref : batch) {
    const SceneSequence& scene = (*scenes_)[static_cast<std::size_t>(ref.scene)];
    const std::vector<int> idx = temporal_sampler(
        static_cast<int>(scene.frames.size()), scene.spec.frame_hz, ref.anchor,
        SamplerMode::kTrain, rng_);
    std::vector<const FrameSample*> ptrs;
    for (int i : idx) ptrs.push_back(&scene.frames[static_cast<std::size_t>(i)]);
    const auto cam_masks = sample_masks(state);
    const bool any_mask = std::any_of(cam_masks.begin(), cam_masks.end(),
                                      [](const auto& m) { return m.has_value(); });
    std::vector<std::vector<std::optional<PatchMask>>> masks;
    if (any_mask) masks.assign(ptrs.size(), cam_masks);

    std::optional<BevState> target;
    if (plan_.reconstruction) {
      ad::NoGradGuard no_grad;
      target = model_.forward(ptrs, {}, rig_).bev;
    }
    const ForwardResult out = model_.forward(ptrs, masks, rig_);

    const FrameSample& anchor = scene.frames[static_cast<std::size_t>(ref.anchor)];
    const std::vector<GtBox> gts =
        rec.gt_filter ? filter_gt_boxes(anchor.boxes, config_.fov) : anchor.boxes;
    const MatchResult match = hungarian_match(out.det, gts, grid_, config_.match_cost);
    const DetLossTerms det = detection_loss(out.det, gts, match, grid_, config_.det_loss);
    const ad::Var seg = segmentation_loss(out.seg, anchor.bev_seg, grid_);
    ad::Var sample_loss = det.total + seg;
    if (target) {
      const ad::Var r = feature_reconstruction_loss(out.bev, *target);
      rec.rec += inv_b * r.scalar();
      sample_loss = sample_loss + ad::scale(r, config_.lambda_rec);
    }
    rec.det_cls += inv_b * det.cls;
    rec.det_center += inv_b * det.center;
    rec.det_size += inv_b * det.size;
    rec.det_yaw += inv_b * det.yaw;
    rec.det_velocity += inv_b * det.velocity;
    rec.seg += inv_b * seg.scalar();
    rec.num_targets += static_cast<int>(gts.size());
    total = total ? *total + sample_loss : sample_loss;
  }
  const ad::Var loss = ad::scale(*total, inv_b);
  rec.loss = loss.scalar();
  rec.forward_passes = model_.forward_count() - passes_before;
  if (!std::isfinite(rec.loss)) {
    throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                          " step " + std::to_string(step_in_epoch));
  }
  ad::backward(loss);
  return rec;
}

StepRecord Trainer::train_step(const std::vector<SampleRef>& batch, int epoch,
                               int step_in_epoch) {
  StepRecord rec = forward_backward(batch, epoch, step_in_epoch);
  rec.grad_norm = optimizer_.step(model_.params(), rec.lr);
  if (!std::isfinite(rec.grad_norm)) {
    throw DivergenceError("non-finite gradient at epoch " + std::to_string(epoch) +
                          " step " + std::to_string(step_in_epoch));
  }
  return rec;
}

EvalOptions Trainer::default_eval_options() const {
  EvalOptions o;
  o.front_only = true;
  o.fov = config_.eval_fov_filter ? std::optional<FovFilterSpec>(config_.fov) : std::nullopt;
  o.top_k = config_.eval_top_k;
  o.max_frames = config_.eval_max_frames;
  return o;
}

EvalResult Trainer::evaluate(const EvalOptions& options) const {
  return evaluate_model(model_, *scenes_, val_, options);
}

void Trainer::save(const fs::path& path) const {
  Checkpoint ckpt;
  const json model_json = model_config_to_json(model_.config());
  const json config_json = train_config_to_json(config_);
  std::ostringstream rng_state;
  rng_state << rng_;
  ckpt.header = {{"format", "monobev-checkpoint"},
                 {"version", 1},
                 {"model", model_json},
                 {"model_hash", json_hash(model_json)},
                 {"train_config", config_json},
                 {"config_hash", json_hash(config_json)},
                 {"epoch", epoch_},
                 {"step_in_epoch", step_in_epoch_},
                 {"global_step", global_step_},
                 {"rng_state", rng_state.str()},
                 {"evals", evals_}};
  store_parameters(model_.params(), ckpt);
  optimizer_.store(ckpt);
  save_checkpoint(path, ckpt);
}

void Trainer::restore(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const json model_json = model_config_to_json(model_.config());
  if (ckpt.header.value("model_hash", std::uint64_t{0}) != json_hash(model_json)) {
    throw ValidationError(path.string() + ": model configuration differs from the run");
  }
  restore_parameters(ckpt, model_.params());
  optimizer_.restore(ckpt, model_.params());
  try {
    epoch_ = ckpt.header.at("epoch").get<int>();
    step_in_epoch_ = ckpt.header.at("step_in_epoch").get<int>();
    global_step_ = ckpt.header.at("global_step").get<long>();
    std::istringstream rng_state(ckpt.header.at("rng_state").get<std::string>());
    rng_state >> rng_;
    if (!rng_state) throw IoError(path.string() + ": bad rng state");
    evals_ = ckpt.header.value("evals", std::vector<json>{});
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": incomplete training state: " + e.what());
  }
}

TrainResult Trainer::run(const RunOptions& options) {
  if (options.resume) restore(*options.resume);
  TrainResult result;
  std::ofstream log;
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    log.open(options.out_dir / "train_log.jsonl",
             options.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open training log in " + options.out_dir.string());
  }
  auto emit = [&](const json& j) {
    if (log.is_open()) log << j.dump() << '\n' << std::flush;
    if (options.on_log) options.on_log(j);
  };

  const int steps = steps_per_epoch();
  for (int epoch = epoch_; epoch < config_.epochs; ++epoch) {
    const std::vector<SampleRef> order = epoch_order(epoch);
    for (int s = step_in_epoch_; s < steps; ++s) {
      if (options.stop_at_step && global_step_ >= *options.stop_at_step) {
        if (!options.out_dir.empty()) save(options.out_dir / "last.ckpt");
        result.evals = evals_;
        return result;
      }
      const std::size_t lo = static_cast<std::size_t>(s) * config_.batch_size;
      const std::size_t hi = std::min(order.size(), lo + config_.batch_size);
      const std::vector<SampleRef> batch(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
      StepRecord rec;
      try {
        rec = train_step(batch, epoch, s);
      } catch (const DivergenceError&) {
        if (!options.out_dir.empty()) save(options.out_dir / "diverged.ckpt");
        throw;
      }
      rec.step = global_step_;
      ++global_step_;
      step_in_epoch_ = s + 1;
      emit(rec.to_json());
      result.steps.push_back(rec);
    }
    epoch_ = epoch + 1;
    step_in_epoch_ = 0;

    const bool last = epoch + 1 == config_.epochs;
    const bool due = config_.eval_every > 0 &&
                     ((epoch + 1) % config_.eval_every == 0 || last);
    if (due && !val_.empty()) {
      EvalOptions eo = default_eval_options();
      eo.feature_gap = last;
      const EvalResult er = evaluate(eo);
      json j = report_to_json(er.report);
      j["type"] = "eval";
      j["epoch"] = epoch;
      j["frames"] = er.frames;
      if (er.feature_gap) j["feature_gap"] = *er.feature_gap;
      evals_.push_back(j);
      emit(j);
    }
    if (!options.out_dir.empty()) {
      if (options.save_epoch_checkpoints) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%02d.ckpt", epoch);
        save(options.out_dir / name);
      }
      save(options.out_dir / "last.ckpt");
    }
  }
  result.completed = true;
  result.evals = evals_;
  if (!options.out_dir.empty() && options.save_final_checkpoint) {
    result.final_checkpoint = options.out_dir / "final.ckpt";
    save(*result.final_checkpoint);
  }
  return result;
}

TrainResult run_training(const TrainConfig& config, const RunOptions& options) {
  if (config.dataset.empty()) throw ConfigError("config.dataset is not set");
  if (!fs::exists(fs::path(config.dataset) / "dataset.json")) {
    throw IoError("no dataset at " + config.dataset);
  }
  const std::vector<SceneSequence> scenes = load_dataset(config.dataset);
  Trainer trainer(config, scenes);
  return trainer.run(options);
}

// ---- ablation -----------------------------------------------------------------

const std::vector<std::string>& ablation_columns() {
  static const std::vector<std::string> cols{
      "inverse_block_masking", "cyclic_lr", "reconstruction_loss", "NDS", "mAP",
      "mATE", "mASE", "mAOE", "mAVE", "mAAE", "mIoU"};
  return cols;
}

std::vector<AblationRow> run_ablation_grid(const TrainConfig& base,
                                           const std::vector<SceneSequence>& scenes,
                                           const RunOptions& options) {
  std::vector<AblationRow> rows;
  for (int k = 0; k < 8; ++k) {
    AblationRow row;
    row.flags = {(k & 1) != 0, (k & 2) != 0, (k & 4) != 0};
    try {
      TrainConfig cfg = base;
      cfg.mode = TrainMode::kAblation;
      cfg.features = row.flags;
      Trainer trainer(cfg, scenes);
      RunOptions ro = options;
      if (!options.out_dir.empty()) ro.out_dir = options.out_dir / ("row_" + std::to_string(k));
      trainer.run(ro);
      EvalOptions eo = trainer.default_eval_options();
      eo.feature_gap = true;
      const EvalResult er = trainer.evaluate(eo);
      row.report = er.report;
      row.feature_gap = er.feature_gap;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json ablation_to_json(const std::vector<AblationRow>& rows) {
  json table = json::array();
  for (const AblationRow& r : rows) {
    json row = json::array({r.flags.inverse_block_masking, r.flags.cyclic_lr,
                            r.flags.reconstruction_loss});
    if (r.report) {
      const EvalReport& e = *r.report;
      for (double v : {e.nds, e.map, e.tp.ate, e.tp.ase, e.tp.aoe, e.tp.ave, e.tp.aae, e.miou}) {
        row.push_back(v);
      }
    } else {
      for (int i = 0; i < 8; ++i) row.push_back(nullptr);
    }
    table.push_back(row);
  }
  json errors = json::array();
  for (const AblationRow& r : rows) errors.push_back(r.error.empty() ? json(nullptr) : json(r.error));
  json gaps = json::array();
  for (const AblationRow& r : rows) gaps.push_back(r.feature_gap ? json(*r.feature_gap) : json(nullptr));
  return {{"columns", ablation_columns()}, {"rows", table}, {"errors", errors},
          {"feature_gap", gaps}};
}

}  // namespace monobev
