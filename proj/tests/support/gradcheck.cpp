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

#include "gradcheck.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "monobev/losses.hpp"
#include "oracles.hpp"

namespace monobev::testing {

GradCheckResult run_gradient_check(std::uint64_t seed, int min_entries, double tolerance) {
  const CameraRig rig = toy_rig();
  const ModelConfig cfg = toy_model_config(rig);
  BevModel model(cfg, seed);

  SceneSpec spec;
  spec.seed = seed;
  spec.duration_s = 2.0;
  spec.num_actors = 3;
  const SceneSequence scene = generate_scene(spec, rig, cfg.grid);
  const std::vector<const FrameSample*> frames{&scene.frames[0], &scene.frames[1]};

  Rng rng(seed);
  std::vector<std::vector<std::optional<PatchMask>>> masks(frames.size());
  for (auto& per_cam : masks) {
    per_cam.resize(rig.size());
    per_cam[1] = inverse_block_mask(cfg.patch_rows(), cfg.patch_cols(), 0.5, 1, rng);
  }
  const std::vector<GtBox> gts{
      make_box(0, 2.5, -3.0, {4.0, 2.0, 1.5}, 0.4, {1.0, 0.5}),
      make_box(2, -5.0, 4.0, {0.8, 0.6, 1.7}, -0.3, {0.4, 0.1})};

  BevState teacher;
  MatchResult match;
  {
    ad::NoGradGuard no_grad;
    teacher = model.forward(frames, {}, rig).bev;
    match = hungarian_match(model.forward(frames, masks, rig).det, gts, cfg.grid);
  }
  auto loss = [&]() {
    const ForwardResult r = model.forward(frames, masks, rig);
    return detection_loss(r.det, gts, match, cfg.grid).total +
           segmentation_loss(r.seg, scene.frames[1].bev_seg, cfg.grid) +
           feature_reconstruction_loss(r.bev, teacher);
  };

  model.params().zero_grad();
  ad::backward(loss());

  struct Entry {
    std::string name;
    Eigen::Index index;
  };
  std::vector<Entry> entries;
  const auto& names = model.params().names();
  for (const auto& name : names) {
    const auto n = model.params().get(name).value().size();
    entries.push_back({name, static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n))});
  }
  while (static_cast<int>(entries.size()) < min_entries) {
    const auto& name = names[rng() % names.size()];
    const auto n = model.params().get(name).value().size();
    entries.push_back({name, static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n))});
  }

  GradCheckResult out;
  const double h = 1e-6;
  ad::NoGradGuard no_grad;
  for (const Entry& e : entries) {
    ad::Var param = model.params().get(e.name);
    const double analytic = param.grad().reshaped<Eigen::RowMajor>()(e.index);
    double& slot = param.mutable_value().reshaped<Eigen::RowMajor>()(e.index);
    const double original = slot;
    slot = original + h;
    const double up = loss().scalar();
    slot = original - h;
    const double down = loss().scalar();
    slot = original;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    // Entries whose gradient vanishes on both sides carry no signal.
    const double rel = scale < 1e-9 ? 0.0 : std::abs(analytic - numeric) / scale;
    ++out.checked;
    if (rel > tolerance) ++out.failed;
    if (rel >= out.worst_rel_error) {
      out.worst_rel_error = rel;
      std::ostringstream s;
      s << e.name << '[' << e.index << "] analytic " << analytic << " numeric " << numeric;
      out.worst_entry = s.str();
    }
  }
  return out;
}

}  // namespace monobev::testing
