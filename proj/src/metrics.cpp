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

#include "monobev/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "monobev/errors.hpp"

namespace monobev {

namespace {

constexpr int kRecallLevels = 101;

// numpy.interp for ascending xp: left of xp[0] gives fp[0], right of the last
// xp gives `right`, otherwise linear within the last bracket xp[j] <= x.
double interp(double x, const std::vector<double>& xp,
              const std::vector<double>& fp, double right) {
  const std::size_t n = xp.size();
  if (x < xp.front()) return fp.front();
  if (x > xp.back()) return right;
  if (x == xp.back()) return fp.back();
  const auto it = std::upper_bound(xp.begin(), xp.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - xp.begin()) - 1;
  if (j + 1 >= n) return fp.back();
  const double slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
  return slope * (x - xp[j]) + fp[j];
}

std::vector<double> cumulative_mean(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    out[i] = acc / static_cast<double>(i + 1);
  }
  return out;
}

double recall_level(int i) { return static_cast<double>(i) / (kRecallLevels - 1); }

int first_recall_index(const MetricSpec& spec) {
  return static_cast<int>(std::lround(100.0 * spec.min_recall)) + 1;
}

}  // namespace

double compute_nds(double map, const TpErrors& tp) {
  double sum = 5.0 * map;
  for (double e : {tp.ate, tp.ase, tp.aoe, tp.ave, tp.aae}) {
    sum += 1.0 - std::min(1.0, e);
  }
  return sum / 10.0;
}

double center_distance(const GtBox& a, const GtBox& b) {
  return (a.center.head<2>() - b.center.head<2>()).norm();
}

double scale_iou(const GtBox& a, const GtBox& b) {
  const double inter = a.size.cwiseMin(b.size).prod();
  const double uni = a.size.prod() + b.size.prod() - inter;
  return inter / uni;
}

double yaw_difference(double a, double b) {
  const double period = 2.0 * std::numbers::pi;
  double d = std::fmod(a - b + 0.5 * period, period);
  if (d < 0.0) d += period;
  return std::abs(d - 0.5 * period);
}

PrCurve accumulate(const std::vector<ScoredBox>& preds,
                   const std::vector<std::vector<GtBox>>& gts, int cls,
                   double dist_threshold) {
  PrCurve curve;
  for (const auto& frame : gts) {
    for (const GtBox& g : frame) curve.num_gt += g.class_id == cls;
  }
  const auto zeros = std::vector<double>(kRecallLevels, 0.0);
  const auto ones = std::vector<double>(kRecallLevels, 1.0);
  curve.precision = zeros;
  curve.confidence = zeros;
  curve.trans = curve.scale = curve.orient = curve.vel = curve.attr = ones;
  if (curve.num_gt == 0) return curve;

  std::vector<const ScoredBox*> ranked;
  for (const ScoredBox& p : preds) {
    if (p.box.class_id == cls) ranked.push_back(&p);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ScoredBox* a, const ScoredBox* b) { return a->score > b->score; });

  std::vector<std::vector<char>> taken(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) taken[s].assign(gts[s].size(), 0);

  std::vector<double> tp, fp, conf;
  std::vector<double> m_trans, m_scale, m_orient, m_vel, m_attr, m_conf;
  for (const ScoredBox* p : ranked) {
    if (p->sample < 0 || p->sample >= static_cast<int>(gts.size())) {
      throw ValidationError("prediction sample index out of range");
    }
    const auto& frame = gts[static_cast<std::size_t>(p->sample)];
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (std::size_t g = 0; g < frame.size(); ++g) {
      if (frame[g].class_id != cls || taken[static_cast<std::size_t>(p->sample)][g]) continue;
      const double d = center_distance(frame[g], p->box);
      if (d < best) {
        best = d;
        best_idx = static_cast<int>(g);
      }
    }
    const bool hit = best_idx >= 0 && best <= dist_threshold;
    tp.push_back(hit ? 1.0 : 0.0);
    fp.push_back(hit ? 0.0 : 1.0);
    conf.push_back(p->score);
    if (!hit) continue;
    taken[static_cast<std::size_t>(p->sample)][static_cast<std::size_t>(best_idx)] = 1;
    const GtBox& g = frame[static_cast<std::size_t>(best_idx)];
    m_trans.push_back(best);
    m_scale.push_back(1.0 - scale_iou(g, p->box));
    m_orient.push_back(yaw_difference(p->box.yaw, g.yaw));
    m_vel.push_back((p->box.velocity - g.velocity).norm());
    m_attr.push_back(p->box.attribute_id == g.attribute_id ? 0.0 : 1.0);
    m_conf.push_back(p->score);
  }
  curve.num_tp = static_cast<int>(m_conf.size());
  if (curve.num_tp == 0) return curve;

  std::partial_sum(tp.begin(), tp.end(), tp.begin());
  std::partial_sum(fp.begin(), fp.end(), fp.begin());
  std::vector<double> prec(tp.size()), rec(tp.size());
  for (std::size_t i = 0; i < tp.size(); ++i) {
    prec[i] = tp[i] / (tp[i] + fp[i]);
    rec[i] = tp[i] / static_cast<double>(curve.num_gt);
  }
  for (int i = 0; i < kRecallLevels; ++i) {
    curve.precision[i] = interp(recall_level(i), rec, prec, 0.0);
    curve.confidence[i] = interp(recall_level(i), rec, conf, 0.0);
  }

  // Errors are interpolated over confidence: cumulative means indexed by
  // ascending match confidence.
  std::vector<double> xp(m_conf.rbegin(), m_conf.rend());
  auto fill = [&](const std::vector<double>& values, std::vector<double>& out) {
    std::vector<double> cm = cumulative_mean(values);
    std::reverse(cm.begin(), cm.end());
    for (int i = 0; i < kRecallLevels; ++i) {
      out[i] = interp(curve.confidence[i], xp, cm, 0.0);
    }
  };
  fill(m_trans, curve.trans);
  fill(m_scale, curve.scale);
  fill(m_orient, curve.orient);
  fill(m_vel, curve.vel);
  fill(m_attr, curve.attr);
  return curve;
}

double average_precision(const PrCurve& curve, const MetricSpec& spec) {
  const int first = first_recall_index(spec);
  double acc = 0.0;
  int n = 0;
  for (int i = first; i < kRecallLevels; ++i, ++n) {
    acc += std::max(0.0, curve.precision[i] - spec.min_precision);
  }
  if (n == 0) return 0.0;
  return (acc / n) / (1.0 - spec.min_precision);
}

TpErrors tp_errors_of(const PrCurve& curve, const MetricSpec& spec) {
  int last = -1;
  for (int i = 0; i < kRecallLevels; ++i) {
    if (curve.confidence[i] != 0.0) last = i;
  }
  const int first = first_recall_index(spec);
  if (curve.num_tp == 0 || last < first) return TpErrors{};
  auto avg = [&](const std::vector<double>& v) {
    double acc = 0.0;
    for (int i = first; i <= last; ++i) acc += v[i];
    return acc / (last - first + 1);
  };
  return {avg(curve.trans), avg(curve.scale), avg(curve.orient), avg(curve.vel),
          avg(curve.attr)};
}

MapResult compute_map(const std::vector<ScoredBox>& preds,
                      const std::vector<std::vector<GtBox>>& gts,
                      const MetricSpec& spec) {
  MapResult out;
  out.class_ap.resize(static_cast<std::size_t>(spec.num_classes));
  double acc = 0.0;
  int counted = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    double class_acc = 0.0;
    bool has_gt = false;
    for (double th : spec.dist_thresholds) {
      const PrCurve curve = accumulate(preds, gts, c, th);
      has_gt = curve.num_gt > 0;
      class_acc += average_precision(curve, spec);
    }
    if (!has_gt) continue;
    const double ap = class_acc / static_cast<double>(spec.dist_thresholds.size());
    out.class_ap[static_cast<std::size_t>(c)] = ap;
    acc += ap;
    ++counted;
  }
  out.map = counted > 0 ? acc / counted : 0.0;
  return out;
}

TpResult compute_tp_errors(const std::vector<ScoredBox>& preds,
                           const std::vector<std::vector<GtBox>>& gts,
                           const MetricSpec& spec) {
  TpResult out;
  out.per_class.resize(static_cast<std::size_t>(spec.num_classes));
  TpErrors sum{0.0, 0.0, 0.0, 0.0, 0.0};
  int counted = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    const PrCurve curve = accumulate(preds, gts, c, spec.tp_threshold);
    if (curve.num_gt == 0) continue;
    const TpErrors e = tp_errors_of(curve, spec);
    out.any_true_positive = out.any_true_positive || curve.num_tp > 0;
    out.per_class[static_cast<std::size_t>(c)] = e;
    sum.ate += e.ate;
    sum.ase += e.ase;
    sum.aoe += e.aoe;
    sum.ave += e.ave;
    sum.aae += e.aae;
    ++counted;
  }
  if (counted > 0) {
    const double k = counted;
    out.mean = {sum.ate / k, sum.ase / k, sum.aoe / k, sum.ave / k, sum.aae / k};
  }
  return out;
}

IouResult compute_miou(const std::vector<std::vector<Mask2d>>& pred,
                       const std::vector<std::vector<Mask2d>>& gt) {
  if (pred.size() != gt.size()) throw ValidationError("compute_miou: frame count mismatch");
  IouResult out;
  if (gt.empty()) return out;
  const std::size_t classes = gt.front().size();
  std::vector<long long> inter(classes, 0), uni(classes, 0);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (pred[f].size() != classes || gt[f].size() != classes) {
      throw ValidationError("compute_miou: class count mismatch");
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const Mask2d& p = pred[f][c];
      const Mask2d& g = gt[f][c];
      if (p.rows() != g.rows() || p.cols() != g.cols()) {
        throw ValidationError("compute_miou: mask shape mismatch");
      }
      const auto pb = p > 0.5f;
      const auto gb = g > 0.5f;
      inter[c] += (pb && gb).count();
      uni[c] += (pb || gb).count();
    }
  }
  double acc = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double iou = uni[c] == 0 ? 1.0 : static_cast<double>(inter[c]) / uni[c];
    out.class_iou.push_back(iou);
    acc += iou;
  }
  out.miou = acc / static_cast<double>(classes);
  return out;
}

bool EvalReport::nds_consistent() const {
  return std::abs(nds - compute_nds(map, tp)) <= 1e-12;
}

EvalReport evaluate(const std::vector<ScoredBox>& preds,
                    const std::vector<std::vector<GtBox>>& gts,
                    const std::vector<std::vector<Mask2d>>& seg_pred,
                    const std::vector<std::vector<Mask2d>>& seg_gt,
                    const std::optional<FovFilterSpec>& fov,
                    const MetricSpec& spec) {
  EvalReport r;
  r.num_frames = static_cast<int>(gts.size());
  std::vector<ScoredBox> kept_preds;
  std::vector<std::vector<GtBox>> kept_gts;
  if (fov) {
    fov->validate();
    r.fov = *fov;
    r.fov_filtered = true;
    for (const ScoredBox& p : preds) {
      if (inside_fov(p.box.center.head<2>(), *fov)) kept_preds.push_back(p);
    }
    for (const auto& frame : gts) kept_gts.push_back(filter_gt_boxes(frame, *fov));
  } else {
    r.fov_filtered = false;
    kept_preds = preds;
    kept_gts = gts;
  }
  const MapResult m = compute_map(kept_preds, kept_gts, spec);
  const TpResult t = compute_tp_errors(kept_preds, kept_gts, spec);
  r.map = m.map;
  r.class_ap = m.class_ap;
  r.tp = t.mean;
  r.class_tp = t.per_class;
  r.tp_defined = t.any_true_positive;
  r.nds = compute_nds(r.map, r.tp);
  if (!seg_gt.empty()) {
    const IouResult iou = compute_miou(seg_pred, seg_gt);
    r.class_iou = iou.class_iou;
    r.miou = iou.miou;
  }
  return r;
}

namespace {

nlohmann::json tp_to_json(const TpErrors& e) {
  return {{"mATE", e.ate}, {"mASE", e.ase}, {"mAOE", e.aoe}, {"mAVE", e.ave}, {"mAAE", e.aae}};
}

TpErrors tp_from_json(const nlohmann::json& j) {
  return {j.at("mATE").get<double>(), j.at("mASE").get<double>(),
          j.at("mAOE").get<double>(), j.at("mAVE").get<double>(),
          j.at("mAAE").get<double>()};
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["NDS"] = r.nds;
  j["mAP"] = r.map;
  j["tp_errors"] = tp_to_json(r.tp);
  j["tp_defined"] = r.tp_defined;
  j["nds_consistent"] = r.nds_consistent();
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < r.class_ap.size(); ++c) {
    nlohmann::json e;
    e["class"] = to_string(static_cast<ActorClass>(c));
    e["AP"] = r.class_ap[c] ? nlohmann::json(*r.class_ap[c]) : nlohmann::json(nullptr);
    e["tp_errors"] = c < r.class_tp.size() && r.class_tp[c]
                         ? tp_to_json(*r.class_tp[c])
                         : nlohmann::json(nullptr);
    per_class.push_back(e);
  }
  j["per_class"] = per_class;
  j["class_iou"] = r.class_iou;
  j["mIoU"] = r.miou;
  j["fov_filter"] = {{"enabled", r.fov_filtered},
                     {"aperture_deg", r.fov.aperture_deg},
                     {"tolerance_deg", r.fov.tolerance_deg},
                     {"total_fov_deg", r.fov.total_fov_deg()}};
  j["num_frames"] = r.num_frames;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.map = j.at("mAP").get<double>();
    r.tp = tp_from_json(j.at("tp_errors"));
    r.nds = j.contains("NDS") ? j.at("NDS").get<double>() : compute_nds(r.map, r.tp);
    r.tp_defined = j.value("tp_defined", true);
    if (j.contains("per_class")) {
      for (const auto& e : j.at("per_class")) {
        r.class_ap.push_back(e.at("AP").is_null()
                                 ? std::nullopt
                                 : std::optional<double>(e.at("AP").get<double>()));
        r.class_tp.push_back(e.at("tp_errors").is_null()
                                 ? std::nullopt
                                 : std::optional<TpErrors>(tp_from_json(e.at("tp_errors"))));
      }
    }
    r.class_iou = j.value("class_iou", std::vector<double>{});
    r.miou = j.value("mIoU", 0.0);
    if (j.contains("fov_filter")) {
      const auto& f = j.at("fov_filter");
      r.fov_filtered = f.value("enabled", true);
      r.fov.aperture_deg = f.value("aperture_deg", r.fov.aperture_deg);
      r.fov.tolerance_deg = f.value("tolerance_deg", r.fov.tolerance_deg);
    }
    r.num_frames = j.value("num_frames", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
  return r;
}

}  // namespace monobev
