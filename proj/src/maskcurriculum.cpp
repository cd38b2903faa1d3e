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

#include "monobev/maskcurriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "monobev/errors.hpp"

namespace monobev {

namespace {

// Snap to 1e-9 so staircase values compare exactly against literals.
double snap(double v) { return std::round(v * 1e9) / 1e9; }

void check_epoch(int epoch, int total) {
  if (epoch < 0 || epoch >= total) {
    throw ValidationError("epoch " + std::to_string(epoch) +
                          " outside [0, " + std::to_string(total) + ")");
  }
}

double cosine_between(double from, double to, double t, double span) {
  if (span <= 0.0) return to;
  return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * t / span));
}

}  // namespace

MaskScheduleState mask_schedule(int epoch, const MaskScheduleSpec& spec) {
  check_epoch(epoch, spec.total_epochs());
  const int ramp_epochs = spec.cycle_epochs * spec.num_cycles;
  MaskScheduleState s;
  s.epoch = epoch;
  if (epoch >= ramp_epochs) {
    s.mu = 1.0;
    s.sigma = 0.0;
    return s;
  }
  const int cycle = epoch / spec.cycle_epochs;
  s.mu = std::min(1.0, snap(cycle * spec.mu_step));
  s.sigma = cycle == 0 ? 0.0 : spec.sigma;
  return s;
}

double sample_ratio(const MaskScheduleState& state, Rng& rng) {
  if (state.sigma <= 0.0) return std::clamp(state.mu, 0.0, 1.0);
  std::normal_distribution<double> dist(state.mu, state.sigma);
  return std::clamp(dist(rng), 0.0, 1.0);
}

PatchMask PatchMask::visible(int rows, int cols) {
  PatchMask m;
  m.masked = Grid::Constant(rows, cols, false);
  return m;
}

PatchMask PatchMask::full(int rows, int cols) {
  PatchMask m;
  m.masked = Grid::Constant(rows, cols, true);
  m.achieved_ratio = 1.0;
  return m;
}

PatchMask inverse_block_mask(int patch_rows, int patch_cols,
                             double target_ratio, int block_size, Rng& rng) {
  if (patch_rows <= 0 || patch_cols <= 0) {
    throw ValidationError("patch grid must be non-empty");
  }
  if (block_size < 1 || block_size > std::min(patch_rows, patch_cols)) {
    throw ValidationError("block_size must be in [1, min(patch_rows, patch_cols)]");
  }
  if (!(target_ratio >= 0.0 && target_ratio <= 1.0)) {
    throw ValidationError("target_ratio must be in [0, 1]");
  }
  const int total = patch_rows * patch_cols;
  const double target_masked = target_ratio * total;
  if (target_ratio >= 1.0) return PatchMask::full(patch_rows, patch_cols);

  PatchMask out = PatchMask::full(patch_rows, patch_cols);
  int visible = 0;
  std::vector<Eigen::Vector2i> last_new;

  auto open_block = [&](int r0, int c0) {
    last_new.clear();
    for (int r = r0; r < r0 + block_size; ++r) {
      for (int c = c0; c < c0 + block_size; ++c) {
        if (out.masked(r, c)) {
          out.masked(r, c) = false;
          last_new.emplace_back(r, c);
          ++visible;
        }
      }
    }
    out.blocks.push_back({r0, c0, block_size});
  };

  const double needed_visible = total - target_masked;
  std::uniform_int_distribution<int> row_dist(0, patch_rows - block_size);
  std::uniform_int_distribution<int> col_dist(0, patch_cols - block_size);
  constexpr int kMaxDraws = 200000;
  int draws = 0;
  while (visible < needed_visible && draws < kMaxDraws) {
    open_block(row_dist(rng), col_dist(rng));
    ++draws;
  }
  // Fallback for near-zero targets where random draws rarely reach the
  // corners: cover the remaining masked patches with clamped blocks.
  for (int r = 0; r < patch_rows && visible < needed_visible; ++r) {
    for (int c = 0; c < patch_cols && visible < needed_visible; ++c) {
      if (!out.masked(r, c)) continue;
      open_block(std::min(r, patch_rows - block_size),
                 std::min(c, patch_cols - block_size));
    }
  }

  // Re-mask patches that the last block opened, outermost first, to close
  // the gap to the target count.
  const int masked_now = total - visible;
  if (!last_new.empty()) {
    const Block& b = out.blocks.back();
    const double cr = b.row + 0.5 * (b.size - 1);
    const double cc = b.col + 0.5 * (b.size - 1);
    std::stable_sort(last_new.begin(), last_new.end(),
                     [&](const Eigen::Vector2i& a, const Eigen::Vector2i& o) {
                       const double da = std::max(std::abs(a.x() - cr),
                                                  std::abs(a.y() - cc));
                       const double db = std::max(std::abs(o.x() - cr),
                                                  std::abs(o.y() - cc));
                       return da > db;
                     });
    const double gap = target_masked - masked_now;
    int k = static_cast<int>(std::floor(gap + 0.5));
    if (gap - std::floor(gap) == 0.5) k = static_cast<int>(std::floor(gap));
    k = std::clamp(k, 0, static_cast<int>(last_new.size()));
    for (int i = 0; i < k; ++i) {
      out.masked(last_new[i].x(), last_new[i].y()) = true;
      out.trimmed.push_back(last_new[i]);
    }
  }
  out.achieved_ratio =
      static_cast<double>(out.masked.count()) / static_cast<double>(total);
  return out;
}

PatchMask random_patch_mask(int patch_rows, int patch_cols,
                            double target_ratio, Rng& rng) {
  if (!(target_ratio >= 0.0 && target_ratio <= 1.0)) {
    throw ValidationError("target_ratio must be in [0, 1]");
  }
  const int total = patch_rows * patch_cols;
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int count = static_cast<int>(std::lround(target_ratio * total));
  PatchMask out = PatchMask::visible(patch_rows, patch_cols);
  for (int i = 0; i < count; ++i) {
    out.masked(order[i] / patch_cols, order[i] % patch_cols) = true;
  }
  out.achieved_ratio = static_cast<double>(count) / total;
  return out;
}

std::vector<Image> apply_masks(
    const std::vector<Image>& images, const CameraRig& rig,
    const std::vector<std::optional<PatchMask>>& masks, int patch_size,
    float fill) {
  if (images.size() != rig.size()) {
    throw ValidationError("apply_masks: image count does not match rig");
  }
  if (!masks.empty() && masks.size() != rig.size()) {
    throw ValidationError("apply_masks: mask count does not match rig");
  }
  if (!masks.empty()) {
    const auto& front = masks[rig.front_index()];
    if (front && !front->all_visible()) {
      throw ContractViolation("the front camera must never be masked");
    }
  }
  std::vector<Image> out = images;
  if (masks.empty()) return out;
  for (std::size_t cam = 0; cam < images.size(); ++cam) {
    if (!masks[cam]) continue;
    const PatchMask& m = *masks[cam];
    Image& img = out[cam];
    if (m.rows() * patch_size != img.height ||
        m.cols() * patch_size != img.width) {
      throw ValidationError("apply_masks: mask grid does not tile the image");
    }
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        if (!m.masked(r, c)) continue;
        img.rgb.block(r * patch_size, 3 * c * patch_size, patch_size,
                      3 * patch_size)
            .setConstant(fill);
      }
    }
  }
  return out;
}

void LrScheduleSpec::validate() const {
  const double floor = floor_fraction * peak_lr;
  if (!(peak_lr > floor && floor > final_lr && final_lr > 0.0)) {
    throw ValidationError(
        "lr schedule requires peak_lr > floor_fraction * peak_lr > final_lr > 0");
  }
  if (cycle_epochs <= 0 || num_cycles < 0 || final_phase_epochs <= 0) {
    throw ValidationError("lr schedule epoch counts must be positive");
  }
}

double cyclic_lr(int epoch, int step_in_epoch, int steps_per_epoch,
                 const LrScheduleSpec& spec) {
  check_epoch(epoch, spec.total_epochs());
  if (steps_per_epoch <= 0 || step_in_epoch < 0 ||
      step_in_epoch >= steps_per_epoch) {
    throw ValidationError("cyclic_lr: step outside [0, steps_per_epoch)");
  }
  const int ramp_epochs = spec.cycle_epochs * spec.num_cycles;
  if (epoch >= ramp_epochs) {
    const double t = (epoch - ramp_epochs) * steps_per_epoch + step_in_epoch;
    const double span = spec.final_phase_epochs * steps_per_epoch - 1;
    return cosine_between(spec.peak_lr, spec.final_lr, t, span);
  }
  const int in_cycle = epoch % spec.cycle_epochs;
  const double t = in_cycle * steps_per_epoch + step_in_epoch;
  const double span = spec.cycle_epochs * steps_per_epoch - 1;
  return cosine_between(spec.peak_lr, spec.floor_fraction * spec.peak_lr, t,
                        span);
}

double cosine_lr(int epoch, int step_in_epoch, int steps_per_epoch,
                 const LrScheduleSpec& spec) {
  check_epoch(epoch, spec.total_epochs());
  if (steps_per_epoch <= 0 || step_in_epoch < 0 ||
      step_in_epoch >= steps_per_epoch) {
    throw ValidationError("cosine_lr: step outside [0, steps_per_epoch)");
  }
  const double t = epoch * steps_per_epoch + step_in_epoch;
  const double span = spec.total_epochs() * steps_per_epoch - 1;
  return cosine_between(spec.peak_lr, spec.final_lr, t, span);
}

}  // namespace monobev
