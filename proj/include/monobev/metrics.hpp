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

// Detection and segmentation scores in the nuScenes style: center-distance
// AP, the five true-positive errors, the composite detection score, and
// segmentation IoU.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "monobev/losses.hpp"
#include "monobev/synthscene.hpp"

namespace monobev {

struct TpErrors {
  double ate = 1.0;  // m
  double ase = 1.0;  // 1 - scale IoU
  double aoe = 1.0;  // rad
  double ave = 1.0;  // m/s
  double aae = 1.0;  // 1 - attribute accuracy

  bool operator==(const TpErrors&) const = default;
};

// (5 * mAP + sum over errors of (1 - min(1, err))) / 10
double compute_nds(double map, const TpErrors& tp);

struct MetricSpec {
  std::vector<double> dist_thresholds{0.5, 1.0, 2.0, 4.0};
  double tp_threshold = 2.0;
  double min_recall = 0.1;
  double min_precision = 0.1;
  int num_classes = kNumObjectClasses;
};

// Precision, recall and confidence of one (class, threshold) sweep,
// interpolated on 101 evenly spaced recall levels.
struct PrCurve {
  std::vector<double> precision;
  std::vector<double> confidence;
  // Per-recall-level cumulative means of each TP error, nuScenes style.
  std::vector<double> trans, scale, orient, vel, attr;
  int num_gt = 0;
  int num_tp = 0;
};

// Greedy matching by descending score on BEV center distance <= threshold.
// `preds[i].sample` indexes `gts`. Only boxes of class `cls` take part.
PrCurve accumulate(const std::vector<ScoredBox>& preds,
                   const std::vector<std::vector<GtBox>>& gts, int cls,
                   double dist_threshold);

double average_precision(const PrCurve& curve, const MetricSpec& spec = {});

// Error values averaged over recall levels from min_recall up to the
// highest achieved; 1.0 for each error when there is no true positive.
TpErrors tp_errors_of(const PrCurve& curve, const MetricSpec& spec = {});

struct MapResult {
  double map = 0.0;
  // Mean over thresholds per class; empty for classes without ground truth.
  std::vector<std::optional<double>> class_ap;
};

// Classes without ground truth are excluded from the mean; mAP is 0 when
// no class has any.
MapResult compute_map(const std::vector<ScoredBox>& preds,
                      const std::vector<std::vector<GtBox>>& gts,
                      const MetricSpec& spec = {});

struct TpResult {
  TpErrors mean;                                // class mean
  std::vector<std::optional<TpErrors>> per_class;
  bool any_true_positive = false;
};

TpResult compute_tp_errors(const std::vector<ScoredBox>& preds,
                           const std::vector<std::vector<GtBox>>& gts,
                           const MetricSpec& spec = {});

struct IouResult {
  std::vector<double> class_iou;  // empty union counts as 1.0
  double miou = 0.0;
};

// Pooled over all frames: per class |pred & gt| / |pred | gt|.
IouResult compute_miou(const std::vector<std::vector<Mask2d>>& pred,
                       const std::vector<std::vector<Mask2d>>& gt);

// Primitive per-pair errors.
double center_distance(const GtBox& a, const GtBox& b);
double scale_iou(const GtBox& a, const GtBox& b);
double yaw_difference(double a, double b);  // wrapped to [0, pi]

struct EvalReport {
  double map = 0.0;
  std::vector<std::optional<double>> class_ap;
  TpErrors tp;
  std::vector<std::optional<TpErrors>> class_tp;
  bool tp_defined = false;  // false when there was no true positive at all
  double nds = 0.0;
  std::vector<double> class_iou;
  double miou = 0.0;
  FovFilterSpec fov;
  bool fov_filtered = true;
  int num_frames = 0;

  // True when nds equals compute_nds(map, tp).
  bool nds_consistent() const;
};

// Filters predictions and ground truth by `fov` when requested, then scores.
EvalReport evaluate(const std::vector<ScoredBox>& preds,
                    const std::vector<std::vector<GtBox>>& gts,
                    const std::vector<std::vector<Mask2d>>& seg_pred,
                    const std::vector<std::vector<Mask2d>>& seg_gt,
                    const std::optional<FovFilterSpec>& fov,
                    const MetricSpec& spec = {});

// Stable key schema; see README.
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace monobev
