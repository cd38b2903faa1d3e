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

// Camera rig geometry: pinhole projection, BEV pillar reference points and
// ego-frame azimuths.
//
// Frames: the ego frame is x forward, y left, z up. Camera frames are the
// usual optical convention (x right, y down, z along the optical axis).

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "monobev/errors.hpp"

namespace monobev {

struct CameraSpec {
  std::string id;
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  // Rigid transform ego <- camera.
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  int height = 0;
  int width = 0;
  bool is_front = false;
  double aperture_deg = 0.0;

  // Throws ConfigError on non-positive focal lengths, nonzero skew, a
  // rotation that is not a proper orthonormal matrix, or an empty image.
  void validate() const;

  // Heading of the optical axis in the ego frame, degrees.
  double yaw_deg() const;

  bool operator==(const CameraSpec&) const = default;
};

// Builds a camera at the ego-frame position `position` looking horizontally
// along `yaw_deg`, with square pixels and the principal point at the image
// center. Focal length follows from the horizontal aperture.
CameraSpec make_camera(std::string id, double yaw_deg, double aperture_deg,
                       int height, int width, bool is_front,
                       const Eigen::Vector3d& position);

class CameraRig {
 public:
  CameraRig() = default;
  // Validates every camera and requires exactly one front camera.
  explicit CameraRig(std::vector<CameraSpec> cameras);

  const std::vector<CameraSpec>& cameras() const { return cameras_; }
  const CameraSpec& camera(std::size_t i) const { return cameras_.at(i); }
  const CameraSpec& front() const { return cameras_[front_index_]; }
  std::size_t front_index() const { return front_index_; }
  std::size_t size() const { return cameras_.size(); }

  // True for a 6-camera rig whose horizontal apertures cover every azimuth
  // (sampled at 0.25 degree steps).
  bool is_surround() const;

  bool operator==(const CameraRig&) const = default;

 private:
  std::vector<CameraSpec> cameras_;
  std::size_t front_index_ = 0;
};

struct RigDefaults {
  int image_height = 128;
  int image_width = 224;
  double front_aperture_deg = 64.5;
  double side_aperture_deg = 70.0;
  // Yaws of the five non-front cameras, degrees.
  std::vector<double> side_yaws_deg{55.0, 110.0, 180.0, -110.0, -55.0};
  double mount_height_m = 1.5;
};

// Six-camera surround rig; front camera at index 0.
CameraRig default_rig(const RigDefaults& defaults = {});

// JSON schema:
//   {"cameras": [{"id": str, "intrinsics": [9 numbers, row-major],
//                 "rotation": [9 numbers, row-major], "translation": [3],
//                 "image_size": [height, width], "is_front": bool,
//                 "aperture_deg": number}, ...]}
nlohmann::json rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);

struct EgoPose {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double yaw = 0.0;  // radians, (-pi, pi]
  double timestamp = 0.0;

  bool operator==(const EgoPose&) const = default;
};

// Wraps an angle to (-pi, pi].
template <typename Scalar>
Scalar normalize_angle(Scalar a) {
  constexpr Scalar kPi = std::numbers::pi_v<Scalar>;
  a = std::remainder(a, Scalar(2) * kPi);
  if (a <= -kPi) a += Scalar(2) * kPi;
  return a;
}

// World <- ego transform applied to an ego-frame point.
inline Eigen::Vector2d ego_to_world(const EgoPose& pose,
                                    const Eigen::Vector2d& p) {
  return Eigen::Rotation2Dd(pose.yaw) * p + pose.position;
}

inline Eigen::Vector2d world_to_ego(const EgoPose& pose,
                                    const Eigen::Vector2d& p) {
  return Eigen::Rotation2Dd(-pose.yaw) * (p - pose.position);
}

// Pinhole projection of an ego-frame point. Returns the pixel (u, v) when the
// point lies in front of the camera and inside [0, width) x [0, height).
template <typename Scalar>
std::optional<Eigen::Matrix<Scalar, 2, 1>> project_point(
    const Eigen::Matrix<Scalar, 3, 1>& point, const CameraSpec& cam) {
  using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
  const Vec3 in_cam = cam.rotation.cast<Scalar>().transpose() *
                      (point - cam.translation.cast<Scalar>());
  if (!(in_cam.z() > Scalar(1e-6))) return std::nullopt;
  const Vec3 pix = cam.intrinsics.cast<Scalar>() * (in_cam / in_cam.z());
  if (pix.x() < Scalar(0) || pix.y() < Scalar(0) ||
      pix.x() >= Scalar(cam.width) || pix.y() >= Scalar(cam.height)) {
    return std::nullopt;
  }
  return Eigen::Matrix<Scalar, 2, 1>(pix.x(), pix.y());
}

// Same as project_point but validates the camera first.
std::optional<Eigen::Vector2d> project_point_checked(
    const Eigen::Vector3d& point, const CameraSpec& cam);

// Projection without the image-bounds test; nullopt only behind the camera.
std::optional<Eigen::Vector2d> project_unbounded(const Eigen::Vector3d& point,
                                                 const CameraSpec& cam);

struct BevGridSpec {
  int rows = 50;
  int cols = 50;
  double extent = 50.0;  // meters covered by the rows axis
  int embed_dim = 32;

  double cell_size() const { return extent / rows; }
  int num_cells() const { return rows * cols; }
  // Row index grows with ego x, column index grows with ego y.
  Eigen::Vector2d cell_center(int row, int col) const {
    const double c = cell_size();
    return {-0.5 * rows * c + (row + 0.5) * c,
            -0.5 * cols * c + (col + 0.5) * c};
  }
  // Continuous (row, col) coordinates of an ego-frame point; cell centers
  // land on integers.
  Eigen::Vector2d to_grid(const Eigen::Vector2d& xy) const {
    const double c = cell_size();
    return {(xy.x() + 0.5 * rows * c) / c - 0.5,
            (xy.y() + 0.5 * cols * c) / c - 0.5};
  }

  bool operator==(const BevGridSpec&) const = default;
};

struct PillarSpec {
  double z_min = -1.0;
  double z_max = 3.0;
  int num_heights = 4;

  bool operator==(const PillarSpec&) const = default;
};

// Vertically stacked reference points above a BEV cell. A single height sits
// at the midpoint of the range; otherwise spacing includes both endpoints.
std::vector<Eigen::Vector3d> pillar_reference_points(int row, int col,
                                                     const BevGridSpec& grid,
                                                     const PillarSpec& pillars);

// Azimuth of an ego-frame position in degrees, (-180, 180]. 0 is straight
// ahead, positive is to the left. The origin maps to 0.
template <typename Scalar>
Scalar box_azimuth(const Eigen::Matrix<Scalar, 2, 1>& center) {
  if (center.x() == Scalar(0) && center.y() == Scalar(0)) return Scalar(0);
  Scalar deg = std::atan2(center.y(), center.x()) * Scalar(180) /
               std::numbers::pi_v<Scalar>;
  if (deg <= Scalar(-180)) deg += Scalar(360);
  return deg;
}

}  // namespace monobev
