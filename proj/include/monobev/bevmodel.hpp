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

// Toy-scale BEV transformer: a patch-embedding backbone shared by all
// cameras, a stack of (temporal self-attention, spatial cross-attention,
// feed-forward) layers over a grid of learned BEV queries, and per-cell
// detection and segmentation heads.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "monobev/autodiff.hpp"
#include "monobev/camgeom.hpp"
#include "monobev/image.hpp"
#include "monobev/maskcurriculum.hpp"
#include "monobev/synthscene.hpp"

namespace monobev {

struct ModelConfig {
  BevGridSpec grid;
  PillarSpec pillars;
  int image_height = 128;
  int image_width = 224;
  int patch_size = 8;
  int feat_dim = 32;
  int num_heads = 4;
  int num_points = 4;
  int num_layers = 3;
  int ffn_dim = 64;
  int num_classes = kNumObjectClasses;
  int num_seg_classes = kNumSegClasses;
  bool detach_history = true;

  int patch_rows() const { return image_height / patch_size; }
  int patch_cols() const { return image_width / patch_size; }
  int embed_dim() const { return grid.embed_dim; }
  void validate() const;
};

// Column layout of the detection head output.
struct DetLayout {
  int num_classes = kNumObjectClasses;
  int center() const { return num_classes; }      // x, y offsets + z
  int log_size() const { return num_classes + 3; }  // log l, w, h
  int yaw() const { return num_classes + 6; }       // sin, cos
  int velocity() const { return num_classes + 8; }  // vx, vy
  int width() const { return num_classes + 10; }
};

struct BevState {
  ad::Var embeddings;  // (rows * cols) x embed_dim, row-major cells
  EgoPose ego_pose;
  BevGridSpec grid;
};

struct DetOutput {
  ad::Var raw;  // cells x DetLayout::width()
  DetLayout layout;
};

struct SegOutput {
  ad::Var logits;  // cells x num_seg_classes
};

struct ForwardResult {
  BevState bev;
  DetOutput det;
  SegOutput seg;
};

// Already-masked camera images of one timestep.
struct FrameInput {
  std::vector<Image> images;
  EgoPose ego_pose;
};

class ParameterStore {
 public:
  ad::Var& add(const std::string& name, ad::Tensor init);
  const ad::Var& get(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  std::size_t num_scalars() const;
  void zero_grad();

 private:
  std::map<std::string, ad::Var> params_;
  std::vector<std::string> order_;
};

// Resamples a history BEV grid into the frame of `current` with bilinear
// interpolation, so world-fixed content keeps its cell; cells that fall
// outside the history grid read zeros.
BevState align_history(const BevState& history, const EgoPose& current);

class BevModel {
 public:
  BevModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  // One feature map per camera: (patch_rows * patch_cols) x feat_dim.
  std::vector<ad::Var> backbone(const std::vector<Image>& images) const;

  // queries + sampled camera features. Cells whose pillars project into no
  // camera get queries + the learned fallback bias instead.
  ad::Var spatial_cross_attention(int layer, const ad::Var& queries,
                                  const std::vector<ad::Var>& feats,
                                  const CameraRig& rig) const;

  // queries + deformable attention over {queries, aligned history}. Without
  // history the current queries stand in for it.
  ad::Var temporal_self_attention(int layer, const ad::Var& queries,
                                  const std::optional<ad::Var>& history) const;

  // All layers for one timestep; returns the BEV embeddings.
  ad::Var encode(const std::vector<ad::Var>& feats, const CameraRig& rig,
                 const std::optional<BevState>& aligned_history) const;

  DetOutput detection_head(const ad::Var& bev) const;
  SegOutput segmentation_head(const ad::Var& bev) const;

  // Processes frames oldest first, threading the BEV state through time.
  ForwardResult forward(std::span<const FrameInput> frames,
                        const CameraRig& rig) const;
  // Applies per-frame, per-camera masks before the forward pass.
  ForwardResult forward(
      std::span<const FrameSample* const> samples,
      const std::vector<std::vector<std::optional<PatchMask>>>& masks,
      const CameraRig& rig) const;

  std::uint64_t forward_count() const { return forward_count_; }

  // Valid pillar projections, cached per rig: (cell, camera) pairs.
  const ad::SamplingPlan& cross_attention_plan(const CameraRig& rig) const;

 private:
  const ad::Var& p(const std::string& name) const { return params_.get(name); }
  std::string layer_key(int layer, const char* part) const;

  ModelConfig config_;
  ParameterStore params_;
  ad::SamplingPlan temporal_plan_;
  mutable std::optional<CameraRig> cached_rig_;
  mutable ad::SamplingPlan cross_plan_;
  mutable Eigen::VectorXd has_hit_;
  mutable std::uint64_t forward_count_ = 0;
};

// Reorders an image into rows of flattened patch_size x patch_size x 3 pixels.
ad::Tensor patchify(const Image& image, int patch_size);

// Decoded predictions of one frame, highest score first.
std::vector<ScoredBox> decode_detections(const DetOutput& det,
                                         const BevGridSpec& grid, int top_k);

// Segmentation logits thresholded at 0 into per-class masks.
std::vector<Mask2d> threshold_segmentation(const SegOutput& seg,
                                           const BevGridSpec& grid);

}  // namespace monobev
