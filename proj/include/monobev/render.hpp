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

// Static figures: camera mosaics with mask overlays, BEV maps with boxes and
// shaded blind sectors, and BEV feature channels as heat maps. PNG output
// goes through libpng.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "monobev/autodiff.hpp"
#include "monobev/camgeom.hpp"
#include "monobev/image.hpp"
#include "monobev/maskcurriculum.hpp"
#include "monobev/synthscene.hpp"

namespace monobev {

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb8&) const = default;
};

class Canvas {
 public:
  Canvas(int height, int width, Rgb8 fill = {});

  int height() const { return height_; }
  int width() const { return width_; }
  Rgb8 at(int y, int x) const;
  void set(int y, int x, Rgb8 c);  // ignores out-of-range pixels
  void blend(int y, int x, Rgb8 c, double alpha);
  void line(double x0, double y0, double x1, double y1, Rgb8 c);
  const std::vector<std::uint8_t>& bytes() const { return data_; }

 private:
  int height_, width_;
  std::vector<std::uint8_t> data_;  // row-major RGB
};

std::string encode_png(const Canvas& canvas);
void write_png(const std::filesystem::path& path, const Canvas& canvas);

Canvas image_to_canvas(const Image& image);

// Cameras tiled two rows by three; masked patches are overlaid with
// deterministic gray noise, the front camera gets a blue frame.
Canvas mask_preview(const std::vector<Image>& images, const CameraRig& rig,
                    const std::vector<std::optional<PatchMask>>& masks,
                    int patch_size, std::uint64_t noise_seed = 0);

// Pixel layout of a BEV figure: ego +x points up, ego +y points left, each
// cell spans `scale` x `scale` pixels.
struct BevView {
  BevGridSpec grid;
  int scale = 8;

  int height() const { return grid.rows * scale; }
  int width() const { return grid.cols * scale; }
  Eigen::Vector2d to_pixel(const Eigen::Vector2d& ego_xy) const;  // (x, y) px
  Eigen::Vector2d to_ego(double px, double py) const;
};

// True when the ego-frame direction of `xy` lies within the horizontal
// aperture of one of the listed cameras (closed boundary).
bool in_camera_sector(const Eigen::Vector2d& xy, const CameraRig& rig,
                      const std::vector<int>& cameras);

Canvas render_segmentation(const std::vector<Mask2d>& masks, const BevView& view);

struct BevFigure {
  std::vector<Mask2d> segmentation;
  std::vector<GtBox> gt_boxes;
  std::vector<ScoredBox> predictions;
  double score_threshold = 0.3;
  std::vector<int> masked_cameras;  // fully masked camera indices
};

// Segmentation backdrop, sectors of fully masked cameras shaded, ground
// truth boxes in green and predictions in red.
Canvas render_bev_figure(const BevFigure& figure, const CameraRig& rig,
                         const BevView& view);

inline constexpr Rgb8 kShadeColor{40, 40, 90};
inline constexpr double kShadeAlpha = 0.5;

// One embedding channel over the grid, min-max normalized.
Canvas render_feature_channel(const ad::Tensor& embeddings, int channel,
                              const BevView& view);

}  // namespace monobev
