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

#include "monobev/losses.hpp"

#include <cmath>
#include <limits>

#include "monobev/errors.hpp"

namespace monobev {

using ad::Tensor;
using ad::Var;

void FovFilterSpec::validate() const {
  if (!(aperture_deg > 0.0) || !(tolerance_deg >= 0.0) ||
      !(total_fov_deg() <= 360.0)) {
    throw ValidationError("fov filter: need aperture > 0, tolerance >= 0, total <= 360");
  }
}

bool inside_fov(const Eigen::Vector2d& center, const FovFilterSpec& spec) {
  return std::abs(box_azimuth<double>(center)) <= 0.5 * spec.total_fov_deg();
}

std::vector<GtBox> filter_gt_boxes(const std::vector<GtBox>& boxes,
                                   const FovFilterSpec& spec) {
  std::vector<GtBox> kept;
  for (const GtBox& b : boxes) {
    if (inside_fov(b.center.head<2>(), spec)) kept.push_back(b);
  }
  return kept;
}

namespace {

// Shortest augmenting path assignment for n <= m; returns the column of
// every row.
std::vector<int> assign_rows(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

MatchResult hungarian(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw ValidationError("hungarian: non-finite cost");
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  std::vector<int> query_to_gt(rows, -1);
  if (rows > 0 && cols > 0) {
    if (rows <= cols) {
      query_to_gt = assign_rows(cost);
    } else {
      const std::vector<int> gt_to_query = assign_rows(cost.transpose());
      for (int g = 0; g < cols; ++g) query_to_gt[gt_to_query[g]] = g;
    }
  }
  MatchResult out;
  for (int q = 0; q < rows; ++q) {
    if (query_to_gt[q] < 0) {
      out.unmatched_queries.push_back(q);
    } else {
      out.pairs.emplace_back(q, query_to_gt[q]);
      out.total_cost += cost(q, query_to_gt[q]);
    }
  }
  return out;
}

Eigen::MatrixXd match_cost_matrix(const DetOutput& det,
                                  const std::vector<GtBox>& gts,
                                  const BevGridSpec& grid,
                                  const MatchCostWeights& weights) {
  if (weights.cls < 0.0 || weights.center < 0.0) {
    throw ValidationError("match cost weights must be non-negative");
  }
  const Tensor& raw = det.raw.value();
  const DetLayout& L = det.layout;
  Eigen::MatrixXd cost(raw.rows(), static_cast<Eigen::Index>(gts.size()));
  for (Eigen::Index q = 0; q < raw.rows(); ++q) {
    const Eigen::Vector2d anchor =
        grid.cell_center(static_cast<int>(q) / grid.cols, static_cast<int>(q) % grid.cols);
    const Eigen::Vector2d center(anchor.x() + raw(q, L.center()),
                                 anchor.y() + raw(q, L.center() + 1));
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double p = 1.0 / (1.0 + std::exp(-raw(q, gts[g].class_id)));
      cost(q, static_cast<Eigen::Index>(g)) =
          weights.cls * (1.0 - p) +
          weights.center * (center - gts[g].center.head<2>()).lpNorm<1>();
    }
  }
  return cost;
}

MatchResult hungarian_match(const DetOutput& det, const std::vector<GtBox>& gts,
                            const BevGridSpec& grid,
                            const MatchCostWeights& weights) {
  return hungarian(match_cost_matrix(det, gts, grid, weights));
}

Eigen::RowVectorXd regression_target(const GtBox& gt, int query,
                                     const BevGridSpec& grid) {
  const Eigen::Vector2d anchor = grid.cell_center(query / grid.cols, query % grid.cols);
  Eigen::RowVectorXd t(10);
  t << gt.center.x() - anchor.x(), gt.center.y() - anchor.y(), gt.center.z(),
      std::log(gt.size.x()), std::log(gt.size.y()), std::log(gt.size.z()),
      std::sin(gt.yaw), std::cos(gt.yaw), gt.velocity.x(), gt.velocity.y();
  return t;
}

DetLossTerms detection_loss(const DetOutput& det, const std::vector<GtBox>& gts,
                            const MatchResult& match, const BevGridSpec& grid,
                            const DetLossWeights& weights) {
  const DetLayout& L = det.layout;
  const Eigen::Index n = det.raw.rows();
  if (n != grid.num_cells() || det.raw.cols() != L.width()) {
    throw ValidationError("detection_loss: output shape does not match grid");
  }
  const double norm = std::max<double>(1.0, static_cast<double>(gts.size()));

  Tensor cls_target = Tensor::Zero(n, L.num_classes);
  std::vector<int> rows;
  Tensor reg_target(static_cast<Eigen::Index>(match.pairs.size()), 10);
  for (std::size_t k = 0; k < match.pairs.size(); ++k) {
    const auto [q, g] = match.pairs[k];
    if (q < 0 || q >= n || g < 0 || g >= static_cast<int>(gts.size())) {
      throw ValidationError("detection_loss: match index out of range");
    }
    cls_target(q, gts[g].class_id) = 1.0;
    rows.push_back(q);
    reg_target.row(static_cast<Eigen::Index>(k)) = regression_target(gts[g], q, grid);
  }

  DetLossTerms out;
  Var cls = ad::scale(ad::sigmoid_focal_sum(ad::slice_cols(det.raw, 0, L.num_classes),
                                            cls_target, weights.focal_alpha,
                                            weights.focal_gamma),
                      weights.cls / norm);
  out.cls = cls.scalar();
  out.total = cls;
  if (rows.empty()) return out;

  const Var matched = ad::gather_rows(det.raw, rows);
  auto term = [&](int col, int count, double w, double& slot) {
    Var v = ad::scale(ad::l1_to(ad::slice_cols(matched, col, count),
                                reg_target.middleCols(col - L.center(), count)),
                      w / norm);
    slot = v.scalar();
    out.total = out.total + v;
  };
  term(L.center(), 3, weights.center, out.center);
  term(L.log_size(), 3, weights.size, out.size);
  term(L.yaw(), 2, weights.yaw, out.yaw);
  term(L.velocity(), 2, weights.velocity, out.velocity);
  return out;
}

Var segmentation_loss(const SegOutput& seg, const std::vector<Mask2d>& gt,
                      const BevGridSpec& grid) {
  const Eigen::Index n = grid.num_cells();
  if (seg.logits.rows() != n || seg.logits.cols() != static_cast<Eigen::Index>(gt.size())) {
    throw ValidationError("segmentation_loss: logits do not match the mask set");
  }
  Tensor target(n, seg.logits.cols());
  for (std::size_t c = 0; c < gt.size(); ++c) {
    if (gt[c].rows() != grid.rows || gt[c].cols() != grid.cols) {
      throw ValidationError("segmentation_loss: mask shape does not match grid");
    }
    for (Eigen::Index q = 0; q < n; ++q) {
      target(q, static_cast<Eigen::Index>(c)) = gt[c](q / grid.cols, q % grid.cols);
    }
  }
  return ad::bce_with_logits_mean(seg.logits, target);
}

Var feature_reconstruction_loss(const BevState& masked, const BevState& full) {
  if (masked.embeddings.rows() != full.embeddings.rows() ||
      masked.embeddings.cols() != full.embeddings.cols()) {
    throw ValidationError("feature_reconstruction_loss: shape mismatch");
  }
  return ad::mse_to(masked.embeddings, full.embeddings.value());
}

}  // namespace monobev
