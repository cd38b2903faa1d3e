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

#include "monobev/camgeom.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace monobev {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Eigen::Matrix3d matrix_from_json(const nlohmann::json& j,
                                 const std::string& what) {
  if (!j.is_array() || j.size() != 9) {
    throw ConfigError(what + ": expected 9 numbers (row-major 3x3)");
  }
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j.at(r * 3 + c).get<double>();
  return m;
}

nlohmann::json matrix_to_json(const Eigen::Matrix3d& m) {
  auto j = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) j.push_back(m(r, c));
  return j;
}

}  // namespace

void CameraSpec::validate() const {
  if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0)) {
    throw ConfigError("camera '" + id + "': focal lengths must be positive");
  }
  if (intrinsics(0, 1) != 0.0 || intrinsics(1, 0) != 0.0 ||
      intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0 ||
      intrinsics(2, 2) != 1.0) {
    throw ConfigError("camera '" + id + "': intrinsics must be zero-skew");
  }
  const double orth =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
          .cwiseAbs()
          .maxCoeff();
  if (!(orth <= 1e-6) || !(std::abs(rotation.determinant() - 1.0) <= 1e-6)) {
    throw ConfigError("camera '" + id +
                      "': rotation is not orthonormal with det +1");
  }
  if (height <= 0 || width <= 0) {
    throw ConfigError("camera '" + id + "': image size must be positive");
  }
}

double CameraSpec::yaw_deg() const {
  const Eigen::Vector3d axis = rotation.col(2);
  return std::atan2(axis.y(), axis.x()) / kDeg;
}

CameraSpec make_camera(std::string id, double yaw_deg, double aperture_deg,
                       int height, int width, bool is_front,
                       const Eigen::Vector3d& position) {
  CameraSpec cam;
  cam.id = std::move(id);
  const double yaw = yaw_deg * kDeg;
  const Eigen::Vector3d forward(std::cos(yaw), std::sin(yaw), 0.0);
  const Eigen::Vector3d right(std::sin(yaw), -std::cos(yaw), 0.0);
  const Eigen::Vector3d down(0.0, 0.0, -1.0);
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = down;
  cam.rotation.col(2) = forward;
  cam.translation = position;
  const double focal = 0.5 * width / std::tan(0.5 * aperture_deg * kDeg);
  cam.intrinsics << focal, 0.0, 0.5 * width, 0.0, focal, 0.5 * height, 0.0,
      0.0, 1.0;
  cam.height = height;
  cam.width = width;
  cam.is_front = is_front;
  cam.aperture_deg = aperture_deg;
  return cam;
}

CameraRig::CameraRig(std::vector<CameraSpec> cameras)
    : cameras_(std::move(cameras)) {
  if (cameras_.empty()) throw ConfigError("rig has no cameras");
  int fronts = 0;
  for (std::size_t i = 0; i < cameras_.size(); ++i) {
    cameras_[i].validate();
    if (cameras_[i].is_front) {
      ++fronts;
      front_index_ = i;
    }
  }
  if (fronts != 1) {
    throw ConfigError("rig must have exactly one front camera, found " +
                      std::to_string(fronts));
  }
}

bool CameraRig::is_surround() const {
  if (cameras_.size() != 6) return false;
  for (double az = -180.0; az < 180.0; az += 0.25) {
    const bool covered =
        std::any_of(cameras_.begin(), cameras_.end(), [&](const auto& cam) {
          const double rel = std::remainder(az - cam.yaw_deg(), 360.0);
          return std::abs(rel) <= 0.5 * cam.aperture_deg + 1e-9;
        });
    if (!covered) return false;
  }
  return true;
}

CameraRig default_rig(const RigDefaults& d) {
  std::vector<CameraSpec> cams;
  const Eigen::Vector3d mount(0.0, 0.0, d.mount_height_m);
  cams.push_back(make_camera("CAM_FRONT", 0.0, d.front_aperture_deg,
                             d.image_height, d.image_width, true, mount));
  static const char* kNames[] = {"CAM_FRONT_LEFT", "CAM_BACK_LEFT",
                                 "CAM_BACK", "CAM_BACK_RIGHT",
                                 "CAM_FRONT_RIGHT"};
  for (std::size_t i = 0; i < d.side_yaws_deg.size(); ++i) {
    const std::string name = i < 5 ? kNames[i] : "CAM_" + std::to_string(i);
    cams.push_back(make_camera(name, d.side_yaws_deg[i], d.side_aperture_deg,
                               d.image_height, d.image_width, false, mount));
  }
  return CameraRig(std::move(cams));
}

nlohmann::json rig_to_json(const CameraRig& rig) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& cam : rig.cameras()) {
    cams.push_back({{"id", cam.id},
                    {"intrinsics", matrix_to_json(cam.intrinsics)},
                    {"rotation", matrix_to_json(cam.rotation)},
                    {"translation",
                     {cam.translation.x(), cam.translation.y(),
                      cam.translation.z()}},
                    {"image_size", {cam.height, cam.width}},
                    {"is_front", cam.is_front},
                    {"aperture_deg", cam.aperture_deg}});
  }
  return {{"cameras", cams}};
}

CameraRig rig_from_json(const nlohmann::json& j) {
  try {
    std::vector<CameraSpec> cams;
    for (const auto& c : j.at("cameras")) {
      CameraSpec cam;
      cam.id = c.at("id").get<std::string>();
      cam.intrinsics = matrix_from_json(c.at("intrinsics"), "intrinsics");
      cam.rotation = matrix_from_json(c.at("rotation"), "rotation");
      const auto& t = c.at("translation");
      if (t.size() != 3) throw ConfigError("translation: expected 3 numbers");
      cam.translation = {t[0].get<double>(), t[1].get<double>(),
                         t[2].get<double>()};
      cam.height = c.at("image_size").at(0).get<int>();
      cam.width = c.at("image_size").at(1).get<int>();
      cam.is_front = c.at("is_front").get<bool>();
      cam.aperture_deg = c.at("aperture_deg").get<double>();
      cams.push_back(std::move(cam));
    }
    return CameraRig(std::move(cams));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rig json: ") + e.what());
  }
}

std::optional<Eigen::Vector2d> project_point_checked(
    const Eigen::Vector3d& point, const CameraSpec& cam) {
  cam.validate();
  return project_point<double>(point, cam);
}

std::optional<Eigen::Vector2d> project_unbounded(const Eigen::Vector3d& point,
                                                 const CameraSpec& cam) {
  const Eigen::Vector3d in_cam =
      cam.rotation.transpose() * (point - cam.translation);
  if (!(in_cam.z() > 1e-6)) return std::nullopt;
  const Eigen::Vector3d pix = cam.intrinsics * (in_cam / in_cam.z());
  return Eigen::Vector2d(pix.x(), pix.y());
}

std::vector<Eigen::Vector3d> pillar_reference_points(
    int row, int col, const BevGridSpec& grid, const PillarSpec& pillars) {
  const Eigen::Vector2d xy = grid.cell_center(row, col);
  std::vector<Eigen::Vector3d> pts;
  const int n = pillars.num_heights;
  pts.reserve(static_cast<std::size_t>(std::max(n, 0)));
  if (n == 1) {
    pts.emplace_back(xy.x(), xy.y(), 0.5 * (pillars.z_min + pillars.z_max));
    return pts;
  }
  for (int i = 0; i < n; ++i) {
    const double z =
        pillars.z_min + (pillars.z_max - pillars.z_min) * i / (n - 1);
    pts.emplace_back(xy.x(), xy.y(), z);
  }
  return pts;
}

}  // namespace monobev
