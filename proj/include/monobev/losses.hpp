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

// Training objectives: set-prediction matching, focal plus L1 detection loss,
// BEV segmentation BCE, the masked-to-unmasked BEV reconstruction loss, and
// the angular ground-truth filter.

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "monobev/autodiff.hpp"
#include "monobev/bevmodel.hpp"
#include "monobev/synthscene.hpp"

namespace monobev {

// Front field of view: camera aperture widened by a tolerance on each side.
struct FovFilterSpec {
  double aperture_deg = 64.5;
  double tolerance_deg = 12.75;

  double total_fov_deg() const { return aperture_deg + 2.0 * tolerance_deg; }
  void validate() const;
  bool operator==(const FovFilterSpec&) const = default;
};

// Closed boundary: |azimuth| <= total_fov_deg / 2. Points exactly on the
// boundary ray are kept.
bool inside_fov(const Eigen::Vector2d& center, const FovFilterSpec& spec);

// Boxes whose center lies inside the field of view, order preserved.
std::vector<GtBox> filter_gt_boxes(const std::vector<GtBox>& boxes,
                                   const FovFilterSpec& spec = {});

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (query, gt), ascending query
  std::vector<int> unmatched_queries;
  double total_cost = 0.0;
};

// Optimal one-to-one assignment minimizing the summed cost of a
// queries x gts matrix; min(rows, cols) pairs are produced.
MatchResult hungarian(const Eigen::MatrixXd& cost);

struct MatchCostWeights {
  double cls = 2.0;
  double center = 0.25;
};

// cost(q, g) = w_cls * (1 - sigmoid(logit of g's class)) + w_center * |dxy|_1
Eigen::MatrixXd match_cost_matrix(const DetOutput& det,
                                  const std::vector<GtBox>& gts,
                                  const BevGridSpec& grid,
                                  const MatchCostWeights& weights);

MatchResult hungarian_match(const DetOutput& det, const std::vector<GtBox>& gts,
                            const BevGridSpec& grid,
                            const MatchCostWeights& weights = {});

struct DetLossWeights {
  double cls = 2.0;
  double center = 0.25;
  double size = 0.25;
  double yaw = 0.25;
  double velocity = 0.05;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

struct DetLossTerms {
  ad::Var total;
  double cls = 0.0;  // weighted components, each divided by max(1, #gt)
  double center = 0.0;
  double size = 0.0;
  double yaw = 0.0;
  double velocity = 0.0;
};

// Regression targets of one box relative to the anchor cell `query`, laid out
// as DetLayout columns from center() to the end.
Eigen::RowVectorXd regression_target(const GtBox& gt, int query,
                                     const BevGridSpec& grid);

DetLossTerms detection_loss(const DetOutput& det, const std::vector<GtBox>& gts,
                            const MatchResult& match, const BevGridSpec& grid,
                            const DetLossWeights& weights = {});

// Mean binary cross-entropy over every (cell, class) entry.
ad::Var segmentation_loss(const SegOutput& seg, const std::vector<Mask2d>& gt,
                          const BevGridSpec& grid);

// Mean squared difference; `full` is a constant target.
ad::Var feature_reconstruction_loss(const BevState& masked,
                                    const BevState& full);

}  // namespace monobev
