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

#include <gtest/gtest.h>

#include <png.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "monobev/errors.hpp"
#include "monobev/render.hpp"

namespace monobev {
namespace {

// Decodes RGB8 through libpng's simplified reader.
std::vector<std::uint8_t> decode_png(const std::string& bytes, int& height, int& width) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) return {};
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> out(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.data(), 0, nullptr)) return {};
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return out;
}

TEST(Png, EncodesLosslessRgb) {
  Canvas c(5, 7);
  std::mt19937 rng(1);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 7; ++x) {
      c.set(y, x, {static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                   static_cast<std::uint8_t>(rng())});
    }
  }
  const std::string png = encode_png(c);
  ASSERT_GT(png.size(), 8u);
  EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  int h = 0, w = 0;
  EXPECT_EQ(decode_png(png, h, w), c.bytes());
  EXPECT_EQ(h, 5);
  EXPECT_EQ(w, 7);
}

TEST(Png, WritesFiles) {
  const auto path = std::filesystem::temp_directory_path() /
                    ("monobev_render_" + std::to_string(::getpid()) + ".png");
  write_png(path, Canvas(3, 3, {1, 2, 3}));
  std::ifstream in(path, std::ios::binary);
  const std::string bytes{std::istreambuf_iterator<char>(in), {}};
  int h = 0, w = 0;
  const auto px = decode_png(bytes, h, w);
  ASSERT_EQ(px.size(), 27u);
  EXPECT_EQ(px[3], 1);
  EXPECT_EQ(px[4], 2);
  EXPECT_EQ(px[5], 3);
  std::filesystem::remove(path);
}

TEST(CanvasTest, SetIgnoresOutOfRangeAndBlendRounds) {
  Canvas c(2, 2, {100, 0, 200});
  c.set(-1, 0, {1, 1, 1});
  c.set(0, 2, {1, 1, 1});
  EXPECT_EQ(c.at(0, 0), (Rgb8{100, 0, 200}));
  c.blend(1, 1, {0, 255, 100}, 0.5);
  EXPECT_EQ(c.at(1, 1), (Rgb8{50, 128, 150}));
}

TEST(BevViewTest, EgoForwardPointsUp) {
  const BevView view{BevGridSpec{10, 10, 20.0, 4}, 4};
  const Eigen::Vector2d ahead = view.to_pixel({8.0, 0.0});
  const Eigen::Vector2d left = view.to_pixel({0.0, 8.0});
  const Eigen::Vector2d origin = view.to_pixel({0.0, 0.0});
  EXPECT_LT(ahead.y(), origin.y());
  EXPECT_NEAR(ahead.x(), origin.x(), 1e-12);
  EXPECT_LT(left.x(), origin.x());
  EXPECT_NEAR(origin.x(), 20.0, 1e-12);
  EXPECT_NEAR(origin.y(), 20.0, 1e-12);
}

TEST(BevViewTest, ToEgoInvertsToPixel) {
  const BevView view{BevGridSpec{12, 8, 24.0, 4}, 5};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d p(u(rng), u(rng));
    const Eigen::Vector2d px = view.to_pixel(p);
    EXPECT_LT((view.to_ego(px.x(), px.y()) - p).norm(), 1e-9);
  }
}

TEST(CameraSector, ClosedApertureAroundTheYaw) {
  const CameraRig rig = default_rig();
  const std::vector<int> front{static_cast<int>(rig.front_index())};
  const double half = 0.5 * rig.front().aperture_deg * std::numbers::pi / 180.0;
  EXPECT_TRUE(in_camera_sector({10.0, 0.0}, rig, front));
  EXPECT_TRUE(in_camera_sector({std::cos(half - 1e-9), std::sin(half - 1e-9)}, rig, front));
  EXPECT_FALSE(in_camera_sector({std::cos(half + 1e-6), std::sin(half + 1e-6)}, rig, front));
  EXPECT_FALSE(in_camera_sector({-10.0, 0.0}, rig, front));
  EXPECT_FALSE(in_camera_sector({10.0, 0.0}, rig, {}));
  // The surround rig covers every direction.
  std::vector<int> all;
  for (std::size_t c = 0; c < rig.size(); ++c) all.push_back(static_cast<int>(c));
  for (int deg = -180; deg < 180; deg += 5) {
    const double a = deg * std::numbers::pi / 180.0;
    EXPECT_TRUE(in_camera_sector({std::cos(a), std::sin(a)}, rig, all)) << deg;
  }
}

TEST(BevFigureTest, ShadingMatchesMaskedSectors) {
  const CameraRig rig = default_rig();
  const BevView view{BevGridSpec{16, 16, 32.0, 4}, 3};
  std::vector<Mask2d> seg(2, Mask2d::Zero(16, 16));
  seg[0].block(4, 4, 8, 8).setOnes();
  BevFigure fig;
  fig.segmentation = seg;
  fig.masked_cameras = {2, 3};
  const Canvas shaded = render_bev_figure(fig, rig, view);
  const Canvas plain = render_segmentation(seg, view);
  Canvas unshaded = render_bev_figure(BevFigure{seg, {}, {}, 0.3, {}}, rig, view);

  // Away from the ego marker, every pixel is either the backdrop or the
  // backdrop blended with the shade colour, as the sector oracle dictates.
  const Eigen::Vector2d ego = view.to_pixel(Eigen::Vector2d::Zero());
  int shaded_count = 0;
  for (int py = 0; py < view.height(); ++py) {
    for (int px = 0; px < view.width(); ++px) {
      if (std::abs(px - ego.x()) <= 4 && std::abs(py - ego.y()) <= 6) continue;
      const Eigen::Vector2d xy = view.to_ego(px + 0.5, py + 0.5);
      Canvas expected(1, 1, plain.at(py, px));
      if (in_camera_sector(xy, rig, fig.masked_cameras)) {
        expected.blend(0, 0, kShadeColor, kShadeAlpha);
        ++shaded_count;
      }
      ASSERT_EQ(shaded.at(py, px), expected.at(0, 0)) << px << "," << py;
      ASSERT_EQ(unshaded.at(py, px), plain.at(py, px));
    }
  }
  EXPECT_GT(shaded_count, view.height() * view.width() / 8);
}

TEST(BevFigureTest, BoxesAreDrawnInTheirColours) {
  const CameraRig rig = default_rig();
  const BevView view{BevGridSpec{16, 16, 32.0, 4}, 4};
  BevFigure fig;
  fig.segmentation.assign(2, Mask2d::Zero(16, 16));
  GtBox box;
  box.center = {8.0, 0.0, 0.0};
  box.size = {4.0, 2.0, 1.5};
  fig.gt_boxes = {box};
  GtBox low = box;
  low.center.x() = -8.0;
  fig.predictions = {{low, 0.1, 0}};
  const Canvas c = render_bev_figure(fig, rig, view);
  const Eigen::Vector2d front_edge = view.to_pixel({10.0, 0.0});
  EXPECT_EQ(c.at(static_cast<int>(std::lround(front_edge.y())), static_cast<int>(front_edge.x())),
            (Rgb8{40, 220, 60}));
  // Below the score threshold nothing is drawn.
  const Eigen::Vector2d low_edge = view.to_pixel({-6.0, 0.0});
  const Canvas backdrop = render_segmentation(fig.segmentation, view);
  const int ly = static_cast<int>(std::lround(low_edge.y()));
  const int lx = static_cast<int>(low_edge.x());
  EXPECT_EQ(c.at(ly, lx), backdrop.at(ly, lx));
}

TEST(FeatureChannel, NormalizedHeatMapAndRangeCheck) {
  const BevView view{BevGridSpec{3, 3, 6.0, 2}, 2};
  ad::Tensor emb = ad::Tensor::Zero(9, 2);
  emb(0, 1) = 1.0;   // cell (0, 0): bottom right of the figure
  emb(8, 1) = -1.0;  // cell (2, 2): top left
  const Canvas c = render_feature_channel(emb, 1, view);
  EXPECT_EQ(c.height(), 6);
  EXPECT_NE(c.at(5, 5), c.at(0, 0));
  EXPECT_EQ(c.at(2, 2), c.at(3, 3));  // both mid-valued cells
  EXPECT_THROW(render_feature_channel(emb, 2, view), ValidationError);
  EXPECT_THROW(render_feature_channel(emb, -1, view), ValidationError);
  EXPECT_THROW(render_feature_channel(ad::Tensor::Zero(4, 2), 0, view), ValidationError);
}

TEST(MaskPreviewTest, MaskedPatchesAreGrayAndFrontIsFramed) {
  RigDefaults d;
  d.image_height = 16;
  d.image_width = 16;
  const CameraRig rig = default_rig(d);
  std::vector<Image> images(rig.size(), Image(16, 16, 1.0f));
  std::vector<std::optional<PatchMask>> masks(rig.size());
  masks[1] = PatchMask::visible(2, 2);
  masks[1]->masked(0, 1) = true;
  const Canvas c = mask_preview(images, rig, masks, 8, 3);
  EXPECT_EQ(c.width(), 3 * 16 + 4 * 4);
  EXPECT_EQ(c.height(), 2 * 16 + 3 * 4);
  // Camera 1 sits at (4, 24); its masked patch covers columns 8-15.
  const Rgb8 masked = c.at(4 + 2, 24 + 12);
  EXPECT_EQ(masked.r, masked.g);
  EXPECT_LT(masked.r, 255);
  EXPECT_EQ(c.at(4 + 2, 24 + 2), (Rgb8{255, 255, 255}));
  EXPECT_EQ(c.at(3, 3), (Rgb8{30, 60, 230}));
  EXPECT_EQ(mask_preview(images, rig, masks, 8, 3).bytes(), c.bytes());
  EXPECT_THROW(mask_preview({images[0]}, rig, masks, 8), ValidationError);
}

}  // namespace
}  // namespace monobev
