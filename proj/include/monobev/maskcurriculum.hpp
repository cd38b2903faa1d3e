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

// Camera masking curriculum: the per-epoch masking-ratio staircase, Gaussian
// ratio sampling, inverse block masks over the backbone patch grid, and the
// cyclic learning-rate schedule aligned with the staircase.

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <vector>

#include "monobev/camgeom.hpp"
#include "monobev/image.hpp"

namespace monobev {

using Rng = std::mt19937_64;

struct MaskScheduleState {
  int epoch = 0;
  double mu = 0.0;
  double sigma = 0.0;

  bool operator==(const MaskScheduleState&) const = default;
};

struct MaskScheduleSpec {
  int cycle_epochs = 4;
  int num_cycles = 5;          // ramp cycles before the final phase
  int final_phase_epochs = 10;
  double mu_step = 0.2;
  double sigma = 0.2;          // used in every cycle except first and last

  int total_epochs() const {
    return cycle_epochs * num_cycles + final_phase_epochs;
  }
};

// Masking-ratio staircase: mu rises by mu_step per cycle, ending at 1.0 for
// the final phase. Throws ValidationError outside [0, total_epochs).
MaskScheduleState mask_schedule(int epoch, const MaskScheduleSpec& spec = {});

// Draw from Normal(mu, sigma^2) clamped to [0, 1]; sigma == 0 returns mu.
double sample_ratio(const MaskScheduleState& state, Rng& rng);

struct Block {
  int row = 0;
  int col = 0;
  int size = 0;

  bool operator==(const Block&) const = default;
};

struct PatchMask {
  using Grid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

  Grid masked;                 // true = masked
  double achieved_ratio = 0.0;
  std::vector<Block> blocks;   // un-masked blocks, in draw order
  std::vector<Eigen::Vector2i> trimmed;  // patches of the last block re-masked

  int rows() const { return static_cast<int>(masked.rows()); }
  int cols() const { return static_cast<int>(masked.cols()); }
  bool all_visible() const { return !masked.any(); }

  static PatchMask visible(int rows, int cols);
  static PatchMask full(int rows, int cols);
};

// Inverse block masking: starts fully masked and un-masks random
// block_size x block_size squares (overlap allowed) until the visible share
// reaches 1 - target_ratio, then re-masks single patches of the last block to
// land as close to the target as the patch count allows.
PatchMask inverse_block_mask(int patch_rows, int patch_cols,
                             double target_ratio, int block_size, Rng& rng);

// Ablation baseline: masks round(target * N) patches chosen uniformly.
PatchMask random_patch_mask(int patch_rows, int patch_cols,
                            double target_ratio, Rng& rng);

// Replaces the pixels of masked patches with `fill`. The front camera must
// have no mask or an all-visible mask, otherwise ContractViolation.
std::vector<Image> apply_masks(const std::vector<Image>& images,
                               const CameraRig& rig,
                               const std::vector<std::optional<PatchMask>>& masks,
                               int patch_size, float fill = 0.0f);

struct LrScheduleSpec {
  double peak_lr = 2e-4;
  double floor_fraction = 0.1;
  double final_lr = 2e-7;
  int cycle_epochs = 4;
  int num_cycles = 5;
  int final_phase_epochs = 10;

  int total_epochs() const {
    return cycle_epochs * num_cycles + final_phase_epochs;
  }
  void validate() const;
};

// Cosine decay from peak to floor_fraction * peak inside every ramp cycle,
// restarting at each cycle start, then one cosine decay from peak to
// final_lr across the final phase. The last step of a phase lands exactly on
// its end value.
double cyclic_lr(int epoch, int step_in_epoch, int steps_per_epoch,
                 const LrScheduleSpec& spec = {});

// Single cosine decay from peak_lr to final_lr over the whole run; the
// schedule used when the cyclic schedule is switched off.
double cosine_lr(int epoch, int step_in_epoch, int steps_per_epoch,
                 const LrScheduleSpec& spec = {});

}  // namespace monobev
