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

// Seeded synthetic driving scenes: a flat world of road polygons and
// constant-velocity actors, rendered into per-camera flat-shaded images and
// BEV segmentation masks.

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "monobev/camgeom.hpp"
#include "monobev/image.hpp"

namespace monobev {

enum class LaneLayout { kStraight, kCurve, kIntersection };
enum class ActorClass { kCar = 0, kTruck = 1, kPedestrian = 2 };
enum class Attribute { kMoving = 0, kStopped = 1 };

inline constexpr int kNumObjectClasses = 3;
inline constexpr int kNumSegClasses = 2;  // drivable area, lane divider

const char* to_string(LaneLayout layout);
LaneLayout lane_layout_from_string(const std::string& s);
const char* to_string(ActorClass c);

struct SceneSpec {
  std::uint64_t seed = 0;
  double duration_s = 3.0;
  double frame_hz = 2.0;
  int num_actors = 6;
  LaneLayout lane_layout = LaneLayout::kStraight;
  std::vector<ActorClass> actor_classes{ActorClass::kCar, ActorClass::kTruck,
                                        ActorClass::kPedestrian};
  double ego_speed = 6.0;  // m/s

  int num_frames() const;
  // Throws ValidationError unless the scene has at least 4 frames.
  void validate() const;
};

struct GtBox {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // ego frame, m
  Eigen::Vector3d size = Eigen::Vector3d::Ones();    // l, w, h
  double yaw = 0.0;                                  // ego frame, rad
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // ego axes, m/s
  int class_id = 0;
  int attribute_id = 0;
  int track_id = -1;

  bool operator==(const GtBox&) const = default;
};

// A predicted box with its confidence; `sample` identifies the frame it
// belongs to when predictions of many frames are pooled.
struct ScoredBox {
  GtBox box;
  double score = 0.0;
  int sample = 0;
};

enum class SurfaceClass { kDrivable = 0, kLaneDivider = 1 };

// Convex polygon on the ground plane, world frame, counter-clockwise.
struct WorldPolygon {
  SurfaceClass surface = SurfaceClass::kDrivable;
  std::vector<Eigen::Vector2d> vertices;
  Eigen::AlignedBox2d bounds;

  WorldPolygon() = default;
  WorldPolygon(SurfaceClass s, std::vector<Eigen::Vector2d> v);
  bool contains(const Eigen::Vector2d& p) const;
};

struct Actor {
  ActorClass cls = ActorClass::kCar;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();  // world, at t = 0
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // world, m/s
  double yaw = 0.0;                                    // world
  Eigen::Vector3d size = Eigen::Vector3d::Ones();

  Eigen::Vector2d position_at(double t) const { return position + velocity * t; }
};

struct WorldModel {
  std::vector<WorldPolygon> polygons;
  std::vector<Actor> actors;
};

using Mask2d =
    Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FrameSample {
  std::vector<Image> images;  // one per rig camera
  EgoPose ego_pose;
  std::vector<GtBox> boxes;
  std::vector<Mask2d> bev_seg;  // kNumSegClasses masks, grid rows x cols
  double timestamp = 0.0;
};

struct SceneSequence {
  SceneSpec spec;
  CameraRig rig;
  BevGridSpec grid;
  WorldModel world;
  std::vector<FrameSample> frames;
};

// Deterministic in (spec, rig, grid). Actors move on constant-velocity
// tracks; boxes are kept when their center lies inside the BEV grid.
SceneSequence generate_scene(const SceneSpec& spec, const CameraRig& rig,
                             const BevGridSpec& grid);

// Rasterizes ground polygons into per-class masks around `pose`. A cell is
// drivable when at least half of its 4x4 sub-samples are, and a lane divider
// when any sub-sample hits one.
std::vector<Mask2d> render_bev_gt(const WorldModel& world,
                                  const BevGridSpec& grid,
                                  const EgoPose& pose = {});

// Renders one camera view of the world at `time` seen from `pose`.
Image render_camera(const WorldModel& world, const CameraSpec& cam,
                    const EgoPose& pose, double time);

// Eight cuboid corners of a box, ego frame.
std::array<Eigen::Vector3d, 8> box_corners(const GtBox& box);

// Paint colors, exposed for tests and figures.
Eigen::Vector3f class_color(ActorClass c);

enum class SamplerMode { kTrain, kInfer };

// Train: three sorted indices from the two-second window ending at `anchor`,
// anchor included. Infer: {anchor - 1, anchor}. Short histories return every
// available index up to the anchor.
std::vector<int> temporal_sampler(int num_frames, double frame_hz, int anchor,
                                  SamplerMode mode, std::mt19937_64& rng);

// ---- on-disk dataset --------------------------------------------------------
//
// DIR/scene_XXXX/manifest.json   spec, grid, rig, frame metadata and boxes
// DIR/scene_XXXX/frame_NNNN_images.bin   float32 [cams, H, W, 3]
// DIR/scene_XXXX/frame_NNNN_bevseg.bin   float32 [classes, rows, cols]
//
// Tensor blobs: magic "MBT1", uint32 rank, rank x uint32 dims, then
// little-endian float32 data in row-major order.

void write_tensor_blob(const std::filesystem::path& path,
                       const std::vector<std::uint32_t>& dims,
                       const std::vector<float>& data);
std::vector<float> read_tensor_blob(const std::filesystem::path& path,
                                    std::vector<std::uint32_t>& dims);

nlohmann::json box_to_json(const GtBox& box);
GtBox box_from_json(const nlohmann::json& j);
nlohmann::json scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const BevGridSpec& grid);
BevGridSpec grid_from_json(const nlohmann::json& j);

void save_scene(const SceneSequence& scene, const std::filesystem::path& dir);
SceneSequence load_scene(const std::filesystem::path& dir);

struct DatasetSpec {
  std::uint64_t seed = 0;
  int num_scenes = 10;
  SceneSpec scene_template;
  RigDefaults rig;
  BevGridSpec grid;
};

// Scene i uses seed = base seed * 1000003 + i and cycles lane layouts.
std::vector<SceneSpec> dataset_scene_specs(const DatasetSpec& spec);
std::vector<SceneSequence> generate_dataset(const DatasetSpec& spec);
void save_dataset(const std::vector<SceneSequence>& scenes,
                  const std::filesystem::path& dir);
std::vector<SceneSequence> load_dataset(const std::filesystem::path& dir);

// Held-out split: every fifth scene (index % 5 == 4).
bool is_validation_scene(int scene_index);

}  // namespace monobev
