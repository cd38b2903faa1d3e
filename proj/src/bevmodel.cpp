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

#include "monobev/bevmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "monobev/errors.hpp"

namespace monobev {

using ad::Tensor;
using ad::Var;

namespace {

Tensor xavier(int in, int out, std::mt19937_64& rng, double gain = 1.0) {
  const double a = gain * std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t(in, out);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
  return t;
}

Tensor zeros(int rows, int cols) { return Tensor::Zero(rows, cols); }
Tensor ones(int rows, int cols) { return Tensor::Ones(rows, cols); }

// Sampling points start on rings around the reference, one direction per
// (head, point) pair, radius growing with the point index.
Tensor ring_offsets(int heads, int anchors, int points, double radius) {
  Tensor b(1, heads * anchors * points * 2);
  for (int h = 0; h < heads; ++h) {
    for (int a = 0; a < anchors; ++a) {
      for (int p = 0; p < points; ++p) {
        const double theta =
            2.0 * std::numbers::pi * (h * points + p) / (heads * points);
        const double r = radius * (p + 1) / points;
        const int col = (h * anchors + a) * points + p;
        b(0, 2 * col) = r * std::cos(theta);
        b(0, 2 * col + 1) = r * std::sin(theta);
      }
    }
  }
  return b;
}

}  // namespace

void ModelConfig::validate() const {
  if (patch_size <= 0 || image_height % patch_size != 0 ||
      image_width % patch_size != 0) {
    throw ValidationError("image size must be a multiple of the patch size");
  }
  if (grid.rows <= 0 || grid.cols <= 0 || !(grid.extent > 0.0)) {
    throw ValidationError("BEV grid must be non-empty");
  }
  if (grid.embed_dim % num_heads != 0) {
    throw ValidationError("embed_dim must be divisible by num_heads");
  }
  if (num_layers < 1 || num_points < 1 || pillars.num_heights < 1 ||
      feat_dim < 1) {
    throw ValidationError("model dimensions must be positive");
  }
}

// ---------------------------------------------------------------------------

Var& ParameterStore::add(const std::string& name, Tensor init) {
  auto [it, inserted] = params_.emplace(name, Var::parameter(std::move(init)));
  if (!inserted) throw std::logic_error("duplicate parameter " + name);
  order_.push_back(name);
  return it->second;
}

const Var& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter " + name);
  return it->second;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, v] : params_) v.zero_grad();
}

// ---------------------------------------------------------------------------

BevState align_history(const BevState& history, const EgoPose& current) {
  const BevGridSpec& g = history.grid;
  if (history.ego_pose.position == current.position &&
      history.ego_pose.yaw == current.yaw) {
    BevState out = history;
    out.ego_pose = current;
    return out;
  }
  ad::RowResampling r;
  r.out_rows = g.num_cells();
  r.taps.resize(static_cast<std::size_t>(g.num_cells()));
  auto snap = [](double v) {
    const double k = std::round(v);
    return std::abs(v - k) < 1e-9 ? k : v;
  };
  for (int row = 0; row < g.rows; ++row) {
    for (int col = 0; col < g.cols; ++col) {
      const Eigen::Vector2d world = ego_to_world(current, g.cell_center(row, col));
      const Eigen::Vector2d gc = g.to_grid(world_to_ego(history.ego_pose, world));
      const double gr = snap(gc.x());
      const double gcol = snap(gc.y());
      const double r0 = std::floor(gr);
      const double c0 = std::floor(gcol);
      const double tr = gr - r0;
      const double tc = gcol - c0;
      auto& taps = r.taps[static_cast<std::size_t>(row * g.cols + col)];
      for (int dr = 0; dr < 2; ++dr) {
        for (int dc = 0; dc < 2; ++dc) {
          const int rr = static_cast<int>(r0) + dr;
          const int cc = static_cast<int>(c0) + dc;
          const double w = (dr ? tr : 1.0 - tr) * (dc ? tc : 1.0 - tc);
          if (w == 0.0 || rr < 0 || cc < 0 || rr >= g.rows || cc >= g.cols) continue;
          taps.emplace_back(rr * g.cols + cc, w);
        }
      }
    }
  }
  BevState out;
  out.grid = g;
  out.ego_pose = current;
  out.embeddings = ad::resample_rows(history.embeddings, r);
  return out;
}

// ---------------------------------------------------------------------------

std::string BevModel::layer_key(int layer, const char* part) const {
  return "layers." + std::to_string(layer) + "." + part;
}

BevModel::BevModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int C = config_.embed_dim();
  const int F = config_.feat_dim;
  const int H = config_.num_heads;
  const int P = config_.num_points;
  const int Z = config_.pillars.num_heights;
  const int patch_in = config_.patch_size * config_.patch_size * 3;
  const int N = config_.grid.num_cells();

  params_.add("backbone.embed.weight", xavier(patch_in, F, rng));
  params_.add("backbone.embed.bias", zeros(1, F));
  params_.add("backbone.proj.weight", xavier(F, F, rng));
  params_.add("backbone.proj.bias", zeros(1, F));

  {
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor q(N, C);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = nd(rng);
    params_.add("bev_queries", std::move(q));
  }

  for (int l = 0; l < config_.num_layers; ++l) {
    auto k = [&](const char* part) { return layer_key(l, part); };
    // Temporal self-attention over {current, history}.
    Tensor toff = xavier(2 * C, H * 2 * P * 2, rng, 0.01);
    params_.add(k("tsa.offset.weight"), std::move(toff));
    params_.add(k("tsa.offset.bias"), ring_offsets(H, 2, P, 1.0));
    params_.add(k("tsa.attn.weight"), zeros(2 * C, H * 2 * P));
    params_.add(k("tsa.attn.bias"), zeros(1, H * 2 * P));
    params_.add(k("tsa.value.weight"), xavier(C, C, rng));
    params_.add(k("tsa.value.bias"), zeros(1, C));
    params_.add(k("tsa.out.weight"), xavier(C, C, rng));
    params_.add(k("tsa.out.bias"), zeros(1, C));
    params_.add(k("norm1.gamma"), ones(1, C));
    params_.add(k("norm1.beta"), zeros(1, C));
    // Spatial cross-attention into camera features.
    params_.add(k("sca.offset.weight"), xavier(C, H * Z * P * 2, rng, 0.01));
    params_.add(k("sca.offset.bias"), ring_offsets(H, Z, P, 1.0));
    params_.add(k("sca.attn.weight"), zeros(C, H * Z * P));
    params_.add(k("sca.attn.bias"), zeros(1, H * Z * P));
    params_.add(k("sca.value.weight"), xavier(F, C, rng));
    params_.add(k("sca.value.bias"), zeros(1, C));
    params_.add(k("sca.out.weight"), xavier(C, C, rng));
    params_.add(k("sca.out.bias"), zeros(1, C));
    params_.add(k("sca.fallback"), zeros(1, C));
    params_.add(k("norm2.gamma"), ones(1, C));
    params_.add(k("norm2.beta"), zeros(1, C));
    // Feed-forward.
    params_.add(k("ffn.fc1.weight"), xavier(C, config_.ffn_dim, rng));
    params_.add(k("ffn.fc1.bias"), zeros(1, config_.ffn_dim));
    params_.add(k("ffn.fc2.weight"), xavier(config_.ffn_dim, C, rng));
    params_.add(k("ffn.fc2.bias"), zeros(1, C));
    params_.add(k("norm3.gamma"), ones(1, C));
    params_.add(k("norm3.beta"), zeros(1, C));
  }

  const DetLayout det{config_.num_classes};
  params_.add("det.fc1.weight", xavier(C, C, rng));
  params_.add("det.fc1.bias", zeros(1, C));
  params_.add("det.fc2.weight", xavier(C, det.width(), rng, 0.1));
  {
    // Start with a low foreground prior so focal loss is not swamped.
    Tensor b = zeros(1, det.width());
    for (int c = 0; c < config_.num_classes; ++c) b(0, c) = -4.6;
    b(0, det.yaw() + 1) = 1.0;
    params_.add("det.fc2.bias", std::move(b));
  }
  params_.add("seg.fc1.weight", xavier(C, C, rng));
  params_.add("seg.fc1.bias", zeros(1, C));
  params_.add("seg.fc2.weight", xavier(C, config_.num_seg_classes, rng));
  params_.add("seg.fc2.bias", zeros(1, config_.num_seg_classes));

  // Temporal plan: every cell samples both sources around itself.
  const BevGridSpec& g = config_.grid;
  temporal_plan_.num_queries = N;
  temporal_plan_.num_heads = H;
  temporal_plan_.num_anchors = 2;
  temporal_plan_.num_points = P;
  temporal_plan_.maps = {{g.rows, g.cols}, {g.rows, g.cols}};
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const int q = r * g.cols + c;
      temporal_plan_.hits.push_back({q, 0, 0, 0, double(c), double(r)});
      temporal_plan_.hits.push_back({q, 1, 1, 0, double(c), double(r)});
    }
  }
  temporal_plan_.finalize();
}

Tensor patchify(const Image& image, int patch_size) {
  const int pr = image.height / patch_size;
  const int pc = image.width / patch_size;
  Tensor out(pr * pc, patch_size * patch_size * 3);
  for (int r = 0; r < pr; ++r) {
    for (int c = 0; c < pc; ++c) {
      auto row = out.row(r * pc + c);
      int k = 0;
      for (int dy = 0; dy < patch_size; ++dy) {
        for (int dx = 0; dx < 3 * patch_size; ++dx) {
          row(k++) = image.rgb(r * patch_size + dy, 3 * c * patch_size + dx);
        }
      }
    }
  }
  return out;
}

std::vector<Var> BevModel::backbone(const std::vector<Image>& images) const {
  std::vector<Var> feats;
  feats.reserve(images.size());
  for (const Image& img : images) {
    if (img.height != config_.image_height || img.width != config_.image_width) {
      throw ValidationError("backbone: image is " + std::to_string(img.height) +
                            "x" + std::to_string(img.width) + ", expected " +
                            std::to_string(config_.image_height) + "x" +
                            std::to_string(config_.image_width));
    }
    Var x(patchify(img, config_.patch_size));
    Var h = ad::gelu(ad::linear(x, p("backbone.embed.weight"), p("backbone.embed.bias")));
    feats.push_back(ad::linear(h, p("backbone.proj.weight"), p("backbone.proj.bias")));
  }
  return feats;
}

const ad::SamplingPlan& BevModel::cross_attention_plan(const CameraRig& rig) const {
  if (cached_rig_ && *cached_rig_ == rig) return cross_plan_;
  const BevGridSpec& g = config_.grid;
  const int ps = config_.patch_size;
  ad::SamplingPlan plan;
  plan.num_queries = g.num_cells();
  plan.num_heads = config_.num_heads;
  plan.num_anchors = config_.pillars.num_heights;
  plan.num_points = config_.num_points;
  for (const auto& cam : rig.cameras()) {
    if (cam.height != config_.image_height || cam.width != config_.image_width) {
      throw ValidationError("camera '" + cam.id + "' image size differs from model");
    }
    plan.maps.push_back({config_.patch_rows(), config_.patch_cols()});
  }
  has_hit_ = Eigen::VectorXd::Zero(g.num_cells());
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const int q = r * g.cols + c;
      const auto pts = pillar_reference_points(r, c, g, config_.pillars);
      for (std::size_t cam = 0; cam < rig.size(); ++cam) {
        for (std::size_t z = 0; z < pts.size(); ++z) {
          const auto uv = project_point<double>(pts[z], rig.camera(cam));
          if (!uv) continue;
          plan.hits.push_back({q, static_cast<int>(z), static_cast<int>(cam),
                               static_cast<int>(cam), uv->x() / ps - 0.5,
                               uv->y() / ps - 0.5});
          has_hit_(q) = 1.0;
        }
      }
    }
  }
  plan.finalize();
  cross_plan_ = std::move(plan);
  cached_rig_ = rig;
  return cross_plan_;
}

Var BevModel::spatial_cross_attention(int layer, const Var& queries,
                                      const std::vector<Var>& feats,
                                      const CameraRig& rig) const {
  if (feats.size() != rig.size()) {
    throw ValidationError("spatial_cross_attention: feature count != camera count");
  }
  const ad::SamplingPlan& plan = cross_attention_plan(rig);
  const int N = config_.grid.num_cells();
  const int Z = config_.pillars.num_heights;
  const int P = config_.num_points;
  auto k = [&](const char* part) { return layer_key(layer, part); };

  std::vector<Var> values;
  values.reserve(feats.size());
  for (const Var& f : feats) {
    values.push_back(ad::linear(f, p(k("sca.value.weight")), p(k("sca.value.bias"))));
  }
  Var offsets = ad::linear(queries, p(k("sca.offset.weight")), p(k("sca.offset.bias")));
  Var weights = ad::softmax_groups(
      ad::linear(queries, p(k("sca.attn.weight")), p(k("sca.attn.bias"))), Z * P);
  Var sampled = ad::deformable_sample(values, offsets, weights, plan);
  Var projected = ad::linear(sampled, p(k("sca.out.weight")), p(k("sca.out.bias")));
  const Eigen::VectorXd miss = Eigen::VectorXd::Ones(N) - has_hit_;
  Var fallback = ad::scale_rows(ad::broadcast_row(p(k("sca.fallback")), N), miss);
  return queries + ad::scale_rows(projected, has_hit_) + fallback;
}

Var BevModel::temporal_self_attention(int layer, const Var& queries,
                                      const std::optional<Var>& history) const {
  const Var& hist = history ? *history : queries;
  if (hist.rows() != queries.rows() || hist.cols() != queries.cols()) {
    throw ValidationError("temporal_self_attention: history shape mismatch");
  }
  auto k = [&](const char* part) { return layer_key(layer, part); };
  const int P = config_.num_points;
  Var both = ad::concat_cols(queries, hist);
  Var offsets = ad::linear(both, p(k("tsa.offset.weight")), p(k("tsa.offset.bias")));
  Var weights = ad::softmax_groups(
      ad::linear(both, p(k("tsa.attn.weight")), p(k("tsa.attn.bias"))), 2 * P);
  const Var cur_v = ad::linear(queries, p(k("tsa.value.weight")), p(k("tsa.value.bias")));
  const Var hist_v = ad::linear(hist, p(k("tsa.value.weight")), p(k("tsa.value.bias")));
  const Var maps[] = {cur_v, hist_v};
  Var sampled = ad::deformable_sample(maps, offsets, weights, temporal_plan_);
  return queries + ad::linear(sampled, p(k("tsa.out.weight")), p(k("tsa.out.bias")));
}

Var BevModel::encode(const std::vector<Var>& feats, const CameraRig& rig,
                     const std::optional<BevState>& aligned_history) const {
  std::optional<Var> hist;
  if (aligned_history) hist = aligned_history->embeddings;
  Var x = p("bev_queries");
  for (int l = 0; l < config_.num_layers; ++l) {
    auto k = [&](const char* part) { return layer_key(l, part); };
    x = ad::layer_norm(temporal_self_attention(l, x, hist), p(k("norm1.gamma")),
                       p(k("norm1.beta")));
    x = ad::layer_norm(spatial_cross_attention(l, x, feats, rig), p(k("norm2.gamma")),
                       p(k("norm2.beta")));
    Var ffn = ad::linear(
        ad::gelu(ad::linear(x, p(k("ffn.fc1.weight")), p(k("ffn.fc1.bias")))),
        p(k("ffn.fc2.weight")), p(k("ffn.fc2.bias")));
    x = ad::layer_norm(x + ffn, p(k("norm3.gamma")), p(k("norm3.beta")));
  }
  return x;
}

DetOutput BevModel::detection_head(const Var& bev) const {
  Var h = ad::gelu(ad::linear(bev, p("det.fc1.weight"), p("det.fc1.bias")));
  return {ad::linear(h, p("det.fc2.weight"), p("det.fc2.bias")),
          DetLayout{config_.num_classes}};
}

SegOutput BevModel::segmentation_head(const Var& bev) const {
  Var h = ad::gelu(ad::linear(bev, p("seg.fc1.weight"), p("seg.fc1.bias")));
  return {ad::linear(h, p("seg.fc2.weight"), p("seg.fc2.bias"))};
}

ForwardResult BevModel::forward(std::span<const FrameInput> frames,
                                const CameraRig& rig) const {
  if (frames.empty()) throw ValidationError("forward: no frames");
  ++forward_count_;
  std::optional<BevState> prev;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    std::optional<ad::NoGradGuard> guard;
    if (config_.detach_history) guard.emplace();
    std::optional<BevState> aligned;
    if (prev) aligned = align_history(*prev, frames[i].ego_pose);
    Var bev = encode(backbone(frames[i].images), rig, aligned);
    prev = BevState{config_.detach_history ? bev.detach() : bev,
                    frames[i].ego_pose, config_.grid};
  }
  const FrameInput& last = frames.back();
  std::optional<BevState> aligned;
  if (prev) aligned = align_history(*prev, last.ego_pose);
  Var bev = encode(backbone(last.images), rig, aligned);
  ForwardResult out;
  out.bev = BevState{bev, last.ego_pose, config_.grid};
  out.det = detection_head(bev);
  out.seg = segmentation_head(bev);
  return out;
}

ForwardResult BevModel::forward(
    std::span<const FrameSample* const> samples,
    const std::vector<std::vector<std::optional<PatchMask>>>& masks,
    const CameraRig& rig) const {
  if (!masks.empty() && masks.size() != samples.size()) {
    throw ValidationError("forward: one mask set per frame expected");
  }
  std::vector<FrameInput> inputs;
  inputs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    FrameInput in;
    in.ego_pose = samples[i]->ego_pose;
    in.images = masks.empty()
                    ? samples[i]->images
                    : apply_masks(samples[i]->images, rig, masks[i], config_.patch_size);
    inputs.push_back(std::move(in));
  }
  return forward(std::span<const FrameInput>(inputs), rig);
}

std::vector<ScoredBox> decode_detections(const DetOutput& det,
                                         const BevGridSpec& grid, int top_k) {
  const Tensor& raw = det.raw.value();
  const DetLayout& L = det.layout;
  std::vector<ScoredBox> out;
  out.reserve(static_cast<std::size_t>(raw.rows()));
  for (int q = 0; q < raw.rows(); ++q) {
    Eigen::Index cls = 0;
    const double logit = raw.row(q).head(L.num_classes).maxCoeff(&cls);
    ScoredBox sb;
    sb.score = 1.0 / (1.0 + std::exp(-logit));
    const Eigen::Vector2d anchor = grid.cell_center(q / grid.cols, q % grid.cols);
    GtBox& b = sb.box;
    b.center = Eigen::Vector3d(anchor.x() + raw(q, L.center()),
                               anchor.y() + raw(q, L.center() + 1),
                               raw(q, L.center() + 2));
    b.size = Eigen::Vector3d(std::exp(std::clamp(raw(q, L.log_size()), -5.0, 5.0)),
                             std::exp(std::clamp(raw(q, L.log_size() + 1), -5.0, 5.0)),
                             std::exp(std::clamp(raw(q, L.log_size() + 2), -5.0, 5.0)));
    b.yaw = std::atan2(raw(q, L.yaw()), raw(q, L.yaw() + 1));
    b.velocity = Eigen::Vector2d(raw(q, L.velocity()), raw(q, L.velocity() + 1));
    b.class_id = static_cast<int>(cls);
    b.attribute_id = b.velocity.norm() > 0.5 ? static_cast<int>(Attribute::kMoving)
                                             : static_cast<int>(Attribute::kStopped);
    out.push_back(sb);
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredBox& a, const ScoredBox& b) {
    return a.score > b.score;
  });
  if (top_k >= 0 && static_cast<int>(out.size()) > top_k) out.resize(top_k);
  return out;
}

std::vector<Mask2d> threshold_segmentation(const SegOutput& seg,
                                           const BevGridSpec& grid) {
  const Tensor& l = seg.logits.value();
  std::vector<Mask2d> out;
  for (Eigen::Index c = 0; c < l.cols(); ++c) {
    Mask2d m(grid.rows, grid.cols);
    for (int q = 0; q < grid.num_cells(); ++q) {
      m(q / grid.cols, q % grid.cols) = l(q, c) > 0.0 ? 1.0f : 0.0f;
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace monobev
