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

#include "monobev/render.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "monobev/errors.hpp"
#include "monobev/fileio.hpp"

namespace monobev {

Canvas::Canvas(int height, int width, Rgb8 fill)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw ValidationError("canvas must be non-empty");
  data_.resize(static_cast<std::size_t>(height) * width * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Rgb8 Canvas::at(int y, int x) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void Canvas::set(int y, int x, Rgb8 c) {
  if (y < 0 || x < 0 || y >= height_ || x >= width_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  data_[i] = c.r;
  data_[i + 1] = c.g;
  data_[i + 2] = c.b;
}

void Canvas::blend(int y, int x, Rgb8 c, double alpha) {
  if (y < 0 || x < 0 || y >= height_ || x >= width_) return;
  const Rgb8 o = at(y, x);
  auto mix = [alpha](std::uint8_t a, std::uint8_t b) {
    return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * a + alpha * b));
  };
  set(y, x, {mix(o.r, c.r), mix(o.g, c.g), mix(o.b, c.b)});
}

void Canvas::line(double x0, double y0, double x1, double y1, Rgb8 c) {
  const int n = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    set(static_cast<int>(std::floor(y0 + t * (y1 - y0))),
        static_cast<int>(std::floor(x0 + t * (x1 - x0))), c);
  }
}

namespace {

void append_png_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void flush_noop(png_structp) {}

}  // namespace

std::string encode_png(const Canvas& canvas) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: cannot create info");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  png_set_write_fn(png, &out, append_png_bytes, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(canvas.width()),
               static_cast<png_uint_32>(canvas.height()), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const auto& bytes = canvas.bytes();
  for (int y = 0; y < canvas.height(); ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() +
                                             static_cast<std::size_t>(y) * canvas.width() * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, const Canvas& canvas) {
  write_file_atomic(path, encode_png(canvas));
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Canvas image_to_canvas(const Image& image) {
  Canvas c(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      c.set(y, x, {to_byte(image.at(y, x, 0)), to_byte(image.at(y, x, 1)),
                   to_byte(image.at(y, x, 2))});
    }
  }
  return c;
}

Canvas mask_preview(const std::vector<Image>& images, const CameraRig& rig,
                    const std::vector<std::optional<PatchMask>>& masks,
                    int patch_size, std::uint64_t noise_seed) {
  if (images.size() != rig.size()) throw ValidationError("mask_preview: image count != cameras");
  const int gap = 4;
  const int h = images.front().height;
  const int w = images.front().width;
  const int cols = 3;
  const int rows = static_cast<int>((images.size() + cols - 1) / cols);
  Canvas out(rows * h + (rows + 1) * gap, cols * w + (cols + 1) * gap, {255, 255, 255});
  Rng rng(noise_seed);
  std::uniform_int_distribution<int> noise(90, 170);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const int oy = gap + static_cast<int>(k / cols) * (h + gap);
    const int ox = gap + static_cast<int>(k % cols) * (w + gap);
    const Canvas cam = image_to_canvas(images[k]);
    const PatchMask* mask = k < masks.size() && masks[k] ? &*masks[k] : nullptr;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (mask && mask->masked(y / patch_size, x / patch_size)) {
          const auto g = static_cast<std::uint8_t>(noise(rng));
          out.set(oy + y, ox + x, {g, g, g});
        } else {
          out.set(oy + y, ox + x, cam.at(y, x));
        }
      }
    }
    if (k == rig.front_index()) {
      const Rgb8 blue{30, 60, 230};
      for (int t = 1; t <= 2; ++t) {
        out.line(ox - t, oy - t, ox + w - 1 + t, oy - t, blue);
        out.line(ox - t, oy + h - 1 + t, ox + w - 1 + t, oy + h - 1 + t, blue);
        out.line(ox - t, oy - t, ox - t, oy + h - 1 + t, blue);
        out.line(ox + w - 1 + t, oy - t, ox + w - 1 + t, oy + h - 1 + t, blue);
      }
    }
  }
  return out;
}

Eigen::Vector2d BevView::to_pixel(const Eigen::Vector2d& xy) const {
  const Eigen::Vector2d g = grid.to_grid(xy);  // continuous (row, col)
  return {(grid.cols - 0.5 - g.y()) * scale, (grid.rows - 0.5 - g.x()) * scale};
}

Eigen::Vector2d BevView::to_ego(double px, double py) const {
  const double col = grid.cols - 0.5 - px / scale;
  const double row = grid.rows - 0.5 - py / scale;
  const double cell = grid.cell_size();
  return {-0.5 * grid.rows * cell + (row + 0.5) * cell,
          -0.5 * grid.cols * cell + (col + 0.5) * cell};
}

bool in_camera_sector(const Eigen::Vector2d& xy, const CameraRig& rig,
                      const std::vector<int>& cameras) {
  const double az = box_azimuth<double>(xy);
  for (int c : cameras) {
    const CameraSpec& cam = rig.camera(static_cast<std::size_t>(c));
    double d = std::fmod(az - cam.yaw_deg() + 540.0, 360.0) - 180.0;
    if (std::abs(d) <= 0.5 * cam.aperture_deg) return true;
  }
  return false;
}

namespace {

Rgb8 seg_color(const std::vector<Mask2d>& masks, int r, int c) {
  if (masks.size() > 1 && masks[1](r, c) > 0.5f) return {235, 235, 235};
  if (!masks.empty() && masks[0](r, c) > 0.5f) return {110, 110, 110};
  return {25, 25, 25};
}

void draw_box(Canvas& canvas, const BevView& view, const GtBox& b, Rgb8 color) {
  const auto corners = box_corners(b);
  std::array<Eigen::Vector2d, 4> px;
  for (int i = 0; i < 4; ++i) px[i] = view.to_pixel(corners[i].head<2>());
  for (int i = 0; i < 4; ++i) {
    const auto& a = px[i];
    const auto& z = px[(i + 1) % 4];
    canvas.line(a.x(), a.y(), z.x(), z.y(), color);
  }
  // Heading tick from the center toward the front face.
  const Eigen::Vector2d c = view.to_pixel(b.center.head<2>());
  const Eigen::Vector2d f = view.to_pixel(
      b.center.head<2>() + 0.5 * b.size.x() * Eigen::Vector2d(std::cos(b.yaw), std::sin(b.yaw)));
  canvas.line(c.x(), c.y(), f.x(), f.y(), color);
}

}  // namespace

Canvas render_segmentation(const std::vector<Mask2d>& masks, const BevView& view) {
  Canvas out(view.height(), view.width());
  for (int py = 0; py < view.height(); ++py) {
    for (int px = 0; px < view.width(); ++px) {
      const int r = view.grid.rows - 1 - py / view.scale;
      const int c = view.grid.cols - 1 - px / view.scale;
      out.set(py, px, seg_color(masks, r, c));
    }
  }
  return out;
}

Canvas render_bev_figure(const BevFigure& fig, const CameraRig& rig, const BevView& view) {
  Canvas out = render_segmentation(fig.segmentation, view);
  if (!fig.masked_cameras.empty()) {
    for (int py = 0; py < view.height(); ++py) {
      for (int px = 0; px < view.width(); ++px) {
        const Eigen::Vector2d xy = view.to_ego(px + 0.5, py + 0.5);
        if (in_camera_sector(xy, rig, fig.masked_cameras)) {
          out.blend(py, px, kShadeColor, kShadeAlpha);
        }
      }
    }
  }
  for (const GtBox& b : fig.gt_boxes) draw_box(out, view, b, {40, 220, 60});
  for (const ScoredBox& p : fig.predictions) {
    if (p.score >= fig.score_threshold) draw_box(out, view, p.box, {230, 40, 40});
  }
  const Eigen::Vector2d ego = view.to_pixel(Eigen::Vector2d::Zero());
  out.line(ego.x() - 3, ego.y(), ego.x() + 3, ego.y(), {255, 200, 0});
  out.line(ego.x(), ego.y() - 5, ego.x(), ego.y() + 3, {255, 200, 0});
  return out;
}

namespace {

// Piecewise-linear dark-to-bright ramp.
Rgb8 heat(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{{0.0, 0.0, 0.02},
                                                               {0.34, 0.06, 0.43},
                                                               {0.72, 0.21, 0.33},
                                                               {0.98, 0.55, 0.04},
                                                               {0.99, 1.0, 0.64}}};
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  auto ch = [&](int k) {
    return static_cast<std::uint8_t>(
        std::lround(255.0 * ((1.0 - f) * stops[i][k] + f * stops[i + 1][k])));
  };
  return {ch(0), ch(1), ch(2)};
}

}  // namespace

Canvas render_feature_channel(const ad::Tensor& embeddings, int channel, const BevView& view) {
  if (channel < 0 || channel >= embeddings.cols()) {
    throw ValidationError("feature channel " + std::to_string(channel) + " out of range [0, " +
                          std::to_string(embeddings.cols()) + ")");
  }
  if (embeddings.rows() != view.grid.num_cells()) {
    throw ValidationError("embeddings do not match the BEV grid");
  }
  const auto col = embeddings.col(channel);
  const double lo = col.minCoeff();
  const double span = std::max(col.maxCoeff() - lo, 1e-12);
  Canvas out(view.height(), view.width());
  for (int py = 0; py < view.height(); ++py) {
    for (int px = 0; px < view.width(); ++px) {
      const int r = view.grid.rows - 1 - py / view.scale;
      const int c = view.grid.cols - 1 - px / view.scale;
      out.set(py, px, heat((col(r * view.grid.cols + c) - lo) / span));
    }
  }
  return out;
}

}  // namespace monobev
