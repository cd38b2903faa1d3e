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

#include "monobev/synthscene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "monobev/errors.hpp"

namespace monobev {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLaneWidth = 3.5;
constexpr double kRoadHalfWidth = 2.0 * kLaneWidth;
constexpr double kDividerWidth = 0.3;
constexpr double kSidewalkOffset = kRoadHalfWidth + 1.5;
constexpr double kCurveRadius = 40.0;
constexpr double kCrossingX = 20.0;
constexpr double kMovingSpeed = 0.5;  // m/s, attribute threshold

const Eigen::Vector3f kSky(0.55f, 0.75f, 0.95f);
const Eigen::Vector3f kGrass(0.35f, 0.55f, 0.25f);
const Eigen::Vector3f kAsphalt(0.30f, 0.30f, 0.30f);
const Eigen::Vector3f kMarking(0.95f, 0.95f, 0.95f);

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

// Counter-clockwise quad around the segment a -> b with the given width.
std::vector<Eigen::Vector2d> segment_quad(const Eigen::Vector2d& a,
                                          const Eigen::Vector2d& b,
                                          double width) {
  const Eigen::Vector2d dir = (b - a).normalized();
  const Eigen::Vector2d left(-dir.y(), dir.x());
  const double h = 0.5 * width;
  return {a - h * left, b - h * left, b + h * left, a + h * left};
}

void add_strip(std::vector<WorldPolygon>& out, SurfaceClass s,
               const std::vector<Eigen::Vector2d>& line, double width) {
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    out.emplace_back(s, segment_quad(line[i], line[i + 1], width));
  }
}

// Annular sector between radii r0 < r1 over [a0, a1], as convex quads.
void add_arc_band(std::vector<WorldPolygon>& out, SurfaceClass s,
                  const Eigen::Vector2d& center, double r0, double r1,
                  double a0, double a1, int pieces) {
  for (int i = 0; i < pieces; ++i) {
    const double t0 = a0 + (a1 - a0) * i / pieces;
    const double t1 = a0 + (a1 - a0) * (i + 1) / pieces;
    const Eigen::Vector2d u0(std::cos(t0), std::sin(t0));
    const Eigen::Vector2d u1(std::cos(t1), std::sin(t1));
    out.emplace_back(s, std::vector<Eigen::Vector2d>{
                            center + r0 * u0, center + r1 * u0,
                            center + r1 * u1, center + r0 * u1});
  }
}

std::vector<WorldPolygon> build_roads(LaneLayout layout) {
  std::vector<WorldPolygon> polys;
  const double divider_offsets[] = {-kLaneWidth, 0.0, kLaneWidth};
  if (layout == LaneLayout::kCurve) {
    const Eigen::Vector2d c(0.0, kCurveRadius);
    const double a0 = -kPi / 2 - 1.2;
    const double a1 = -kPi / 2 + 2.0;
    add_arc_band(polys, SurfaceClass::kDrivable, c,
                 kCurveRadius - kRoadHalfWidth, kCurveRadius + kRoadHalfWidth,
                 a0, a1, 96);
    for (double off : divider_offsets) {
      const double r = kCurveRadius - off;
      add_arc_band(polys, SurfaceClass::kLaneDivider, c,
                   r - 0.5 * kDividerWidth, r + 0.5 * kDividerWidth, a0, a1,
                   96);
    }
    return polys;
  }
  polys.emplace_back(SurfaceClass::kDrivable,
                     std::vector<Eigen::Vector2d>{{-150.0, -kRoadHalfWidth},
                                                  {250.0, -kRoadHalfWidth},
                                                  {250.0, kRoadHalfWidth},
                                                  {-150.0, kRoadHalfWidth}});
  for (double off : divider_offsets) {
    add_strip(polys, SurfaceClass::kLaneDivider,
              {{-150.0, off}, {250.0, off}}, kDividerWidth);
  }
  if (layout == LaneLayout::kIntersection) {
    polys.emplace_back(
        SurfaceClass::kDrivable,
        std::vector<Eigen::Vector2d>{{kCrossingX - kRoadHalfWidth, -150.0},
                                     {kCrossingX + kRoadHalfWidth, -150.0},
                                     {kCrossingX + kRoadHalfWidth, 150.0},
                                     {kCrossingX - kRoadHalfWidth, 150.0}});
    for (double off : divider_offsets) {
      add_strip(polys, SurfaceClass::kLaneDivider,
                {{kCrossingX + off, -150.0}, {kCrossingX + off, 150.0}},
                kDividerWidth);
    }
  }
  return polys;
}

EgoPose ego_pose_at(const SceneSpec& spec, double t) {
  EgoPose pose;
  pose.timestamp = t;
  if (spec.lane_layout == LaneLayout::kCurve) {
    const double r = kCurveRadius + 0.5 * kLaneWidth;
    const double phi = -kPi / 2 + spec.ego_speed * t / r;
    pose.position = Eigen::Vector2d(0.0, kCurveRadius) +
                    r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    pose.yaw = normalize_angle(phi + kPi / 2);
  } else {
    pose.position = Eigen::Vector2d(spec.ego_speed * t, -0.5 * kLaneWidth);
    pose.yaw = 0.0;
  }
  return pose;
}

Eigen::Vector3d nominal_size(ActorClass c) {
  switch (c) {
    case ActorClass::kCar:
      return {4.5, 1.9, 1.6};
    case ActorClass::kTruck:
      return {8.0, 2.5, 3.2};
    case ActorClass::kPedestrian:
      return {0.7, 0.7, 1.75};
  }
  return {1.0, 1.0, 1.0};
}

// Places an actor on a lane (or sidewalk) at along-road coordinate s.
// `lateral` is the signed offset from the road centerline, left positive;
// `forward` selects the travel direction along the road.
Actor place_actor(LaneLayout layout, bool on_crossing, double s,
                  double lateral, bool forward, double speed) {
  Actor a;
  const double sign = forward ? 1.0 : -1.0;
  if (layout == LaneLayout::kCurve) {
    const Eigen::Vector2d c(0.0, kCurveRadius);
    const double r = kCurveRadius - lateral;
    const double phi = -kPi / 2 + s / r;
    a.position = c + r * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    const Eigen::Vector2d tangent(-std::sin(phi), std::cos(phi));
    a.velocity = sign * speed * tangent;
    a.yaw = std::atan2(sign * tangent.y(), sign * tangent.x());
  } else if (on_crossing) {
    a.position = Eigen::Vector2d(kCrossingX - lateral, s);
    a.velocity = Eigen::Vector2d(0.0, sign * speed);
    a.yaw = forward ? kPi / 2 : -kPi / 2;
  } else {
    a.position = Eigen::Vector2d(s, lateral);
    a.velocity = Eigen::Vector2d(sign * speed, 0.0);
    a.yaw = forward ? 0.0 : kPi;
  }
  a.yaw = normalize_angle(a.yaw);
  return a;
}

std::vector<Actor> spawn_actors(const SceneSpec& spec, std::mt19937_64& rng) {
  std::vector<Actor> actors;
  if (spec.num_actors == 0 || spec.actor_classes.empty()) return actors;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_class(
      0, spec.actor_classes.size() - 1);
  const Eigen::Vector2d ego_start = ego_pose_at(spec, 0.0).position;
  const double lanes[] = {-1.5 * kLaneWidth, -0.5 * kLaneWidth,
                          0.5 * kLaneWidth, 1.5 * kLaneWidth};
  for (int i = 0; i < spec.num_actors; ++i) {
    const ActorClass cls = spec.actor_classes[pick_class(rng)];
    for (int attempt = 0; attempt < 64; ++attempt) {
      const bool crossing = spec.lane_layout == LaneLayout::kIntersection &&
                            unit(rng) < 0.3;
      double s = -20.0 + 55.0 * unit(rng);
      double lateral = 0.0;
      bool forward = true;
      double speed = 0.0;
      if (cls == ActorClass::kPedestrian) {
        lateral = (unit(rng) < 0.5 ? -1.0 : 1.0) * kSidewalkOffset;
        forward = unit(rng) < 0.5;
        speed = unit(rng) < 0.4 ? 0.0 : 1.0 + 0.6 * unit(rng);
      } else {
        const int lane = static_cast<int>(unit(rng) * 4.0) % 4;
        lateral = lanes[lane];
        forward = lateral < 0.0;
        const bool ego_lane = !crossing && lane == 1;
        if (ego_lane) {
          speed = spec.ego_speed - 1.0 + 2.0 * unit(rng);
        } else {
          speed = unit(rng) < 0.3 ? 0.0 : 2.0 + 6.0 * unit(rng);
        }
      }
      if (crossing) s = -25.0 + 50.0 * unit(rng);
      Actor a = place_actor(spec.lane_layout, crossing, s, lateral, forward,
                            speed);
      a.cls = cls;
      const Eigen::Vector3d jitter(0.9 + 0.2 * unit(rng),
                                   0.9 + 0.2 * unit(rng),
                                   0.9 + 0.2 * unit(rng));
      a.size = nominal_size(cls).cwiseProduct(jitter);
      bool clear = (a.position - ego_start).norm() > 8.0;
      for (const Actor& o : actors) {
        clear = clear && (a.position - o.position).norm() > 6.0;
      }
      if (clear) {
        actors.push_back(a);
        break;
      }
    }
  }
  return actors;
}

std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
      --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0)
      --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_convex(const std::vector<Eigen::Vector2d>& poly,
                   const Eigen::Vector2d& p) {
  bool pos = false;
  bool neg = false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const double c = cross2(poly[(i + 1) % poly.size()] - poly[i], p - poly[i]);
    pos = pos || c > 0.0;
    neg = neg || c < 0.0;
    if (pos && neg) return false;
  }
  return true;
}

GtBox box_for(const Actor& a, int track, const EgoPose& pose, double t) {
  GtBox box;
  const Eigen::Vector2d xy = world_to_ego(pose, a.position_at(t));
  box.center = Eigen::Vector3d(xy.x(), xy.y(), 0.5 * a.size.z());
  box.size = a.size;
  box.yaw = normalize_angle(a.yaw - pose.yaw);
  box.velocity = Eigen::Rotation2Dd(-pose.yaw) * a.velocity;
  box.class_id = static_cast<int>(a.cls);
  box.attribute_id = a.velocity.norm() > kMovingSpeed
                         ? static_cast<int>(Attribute::kMoving)
                         : static_cast<int>(Attribute::kStopped);
  box.track_id = track;
  return box;
}

}  // namespace

const char* to_string(LaneLayout layout) {
  switch (layout) {
    case LaneLayout::kStraight:
      return "straight";
    case LaneLayout::kCurve:
      return "curve";
    case LaneLayout::kIntersection:
      return "intersection";
  }
  return "straight";
}

LaneLayout lane_layout_from_string(const std::string& s) {
  if (s == "straight") return LaneLayout::kStraight;
  if (s == "curve") return LaneLayout::kCurve;
  if (s == "intersection") return LaneLayout::kIntersection;
  throw ValidationError("unknown lane layout '" + s + "'");
}

const char* to_string(ActorClass c) {
  switch (c) {
    case ActorClass::kCar:
      return "car";
    case ActorClass::kTruck:
      return "truck";
    case ActorClass::kPedestrian:
      return "pedestrian";
  }
  return "car";
}

int SceneSpec::num_frames() const {
  return static_cast<int>(std::floor(duration_s * frame_hz + 1e-9));
}

void SceneSpec::validate() const {
  if (!(frame_hz > 0.0) || !(duration_s > 0.0)) {
    throw ValidationError("scene duration and frame rate must be positive");
  }
  if (num_frames() < 4) {
    throw ValidationError("scene must contain at least 4 frames, got " +
                          std::to_string(num_frames()));
  }
  if (num_actors < 0) throw ValidationError("num_actors must be >= 0");
}

WorldPolygon::WorldPolygon(SurfaceClass s, std::vector<Eigen::Vector2d> v)
    : surface(s), vertices(std::move(v)) {
  for (const auto& p : vertices) bounds.extend(p);
}

bool WorldPolygon::contains(const Eigen::Vector2d& p) const {
  if (!bounds.contains(p)) return false;
  return inside_convex(vertices, p);
}

Eigen::Vector3f class_color(ActorClass c) {
  switch (c) {
    case ActorClass::kCar:
      return {0.85f, 0.10f, 0.10f};
    case ActorClass::kTruck:
      return {0.95f, 0.60f, 0.10f};
    case ActorClass::kPedestrian:
      return {0.70f, 0.10f, 0.80f};
  }
  return {1.0f, 1.0f, 1.0f};
}

std::array<Eigen::Vector3d, 8> box_corners(const GtBox& box) {
  std::array<Eigen::Vector3d, 8> out;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  int k = 0;
  for (int ix = -1; ix <= 1; ix += 2) {
    for (int iy = -1; iy <= 1; iy += 2) {
      for (int iz = -1; iz <= 1; iz += 2) {
        const double lx = 0.5 * ix * box.size.x();
        const double ly = 0.5 * iy * box.size.y();
        out[k++] = box.center + Eigen::Vector3d(c * lx - s * ly,
                                                s * lx + c * ly,
                                                0.5 * iz * box.size.z());
      }
    }
  }
  return out;
}

std::vector<Mask2d> render_bev_gt(const WorldModel& world,
                                  const BevGridSpec& grid,
                                  const EgoPose& pose) {
  std::vector<Mask2d> masks(kNumSegClasses,
                            Mask2d::Zero(grid.rows, grid.cols));
  constexpr int kSub = 4;
  const double cell = grid.cell_size();
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const Eigen::Vector2d center = grid.cell_center(r, c);
      int drivable = 0;
      bool divider = false;
      for (int i = 0; i < kSub; ++i) {
        for (int j = 0; j < kSub; ++j) {
          const Eigen::Vector2d local =
              center + cell * Eigen::Vector2d((i + 0.5) / kSub - 0.5,
                                              (j + 0.5) / kSub - 0.5);
          const Eigen::Vector2d w = ego_to_world(pose, local);
          bool hit_drivable = false;
          for (const auto& poly : world.polygons) {
            if (poly.surface == SurfaceClass::kDrivable && !hit_drivable &&
                poly.contains(w)) {
              hit_drivable = true;
            } else if (poly.surface == SurfaceClass::kLaneDivider &&
                       !divider && poly.contains(w)) {
              divider = true;
            }
          }
          drivable += hit_drivable;
        }
      }
      masks[0](r, c) = 2 * drivable >= kSub * kSub ? 1.0f : 0.0f;
      masks[1](r, c) = divider ? 1.0f : 0.0f;
    }
  }
  return masks;
}

Image render_camera(const WorldModel& world, const CameraSpec& cam,
                    const EgoPose& pose, double time) {
  Image img(cam.height, cam.width);
  const Eigen::Matrix3d kinv = cam.intrinsics.inverse();
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Eigen::Vector3d ray =
          cam.rotation * (kinv * Eigen::Vector3d(u + 0.5, v + 0.5, 1.0));
      Eigen::Vector3f color = kSky;
      if (ray.z() < -1e-9) {
        const double s = -cam.translation.z() / ray.z();
        const Eigen::Vector3d ground = cam.translation + s * ray;
        const Eigen::Vector2d w = ego_to_world(pose, ground.head<2>());
        color = kGrass;
        bool drivable = false;
        bool marking = false;
        for (const auto& poly : world.polygons) {
          if (!poly.contains(w)) continue;
          if (poly.surface == SurfaceClass::kLaneDivider) {
            marking = true;
            break;
          }
          drivable = true;
        }
        if (marking) {
          color = kMarking;
        } else if (drivable) {
          color = kAsphalt;
        }
      }
      img.at(v, u, 0) = color.x();
      img.at(v, u, 1) = color.y();
      img.at(v, u, 2) = color.z();
    }
  }

  // Actors, far to near.
  struct Item {
    double dist;
    GtBox box;
    ActorClass cls;
  };
  std::vector<Item> items;
  for (const Actor& a : world.actors) {
    GtBox box = box_for(a, 0, pose, time);
    const double d = (box.center - cam.translation).norm();
    items.push_back({d, box, a.cls});
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.dist > b.dist; });
  constexpr double kNear = 0.05;
  static const int kEdges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7},
                                    {0, 2}, {1, 3}, {4, 6}, {5, 7},
                                    {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  for (const Item& item : items) {
    const auto corners = box_corners(item.box);
    std::array<Eigen::Vector3d, 8> in_cam;
    for (int i = 0; i < 8; ++i) {
      in_cam[i] = cam.rotation.transpose() * (corners[i] - cam.translation);
    }
    std::vector<Eigen::Vector3d> clipped;
    for (const auto& p : in_cam)
      if (p.z() >= kNear) clipped.push_back(p);
    if (clipped.empty()) continue;
    for (const auto& e : kEdges) {
      const Eigen::Vector3d& a = in_cam[e[0]];
      const Eigen::Vector3d& b = in_cam[e[1]];
      if ((a.z() >= kNear) != (b.z() >= kNear)) {
        const double t = (kNear - a.z()) / (b.z() - a.z());
        clipped.push_back(a + t * (b - a));
      }
    }
    std::vector<Eigen::Vector2d> pix;
    for (const auto& p : clipped) {
      const Eigen::Vector3d q = cam.intrinsics * (p / p.z());
      pix.emplace_back(q.x(), q.y());
    }
    const auto hull = convex_hull(pix);
    if (hull.size() < 3) continue;
    Eigen::AlignedBox2d bb;
    for (const auto& p : hull) bb.extend(p);
    const int u0 = std::max(0, static_cast<int>(std::floor(bb.min().x())));
    const int u1 = std::min(cam.width - 1, static_cast<int>(std::ceil(bb.max().x())));
    const int v0 = std::max(0, static_cast<int>(std::floor(bb.min().y())));
    const int v1 = std::min(cam.height - 1, static_cast<int>(std::ceil(bb.max().y())));
    const Eigen::Vector3f color = class_color(item.cls);
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        if (!inside_convex(hull, Eigen::Vector2d(u + 0.5, v + 0.5))) continue;
        img.at(v, u, 0) = color.x();
        img.at(v, u, 1) = color.y();
        img.at(v, u, 2) = color.z();
      }
    }
  }
  return img;
}

SceneSequence generate_scene(const SceneSpec& spec, const CameraRig& rig,
                             const BevGridSpec& grid) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SceneSequence seq;
  seq.spec = spec;
  seq.rig = rig;
  seq.grid = grid;
  seq.world.polygons = build_roads(spec.lane_layout);
  seq.world.actors = spawn_actors(spec, rng);

  const double half_x = 0.5 * grid.rows * grid.cell_size();
  const double half_y = 0.5 * grid.cols * grid.cell_size();
  const int n = spec.num_frames();
  for (int k = 0; k < n; ++k) {
    const double t = k / spec.frame_hz;
    FrameSample f;
    f.timestamp = t;
    f.ego_pose = ego_pose_at(spec, t);
    for (std::size_t i = 0; i < seq.world.actors.size(); ++i) {
      GtBox box = box_for(seq.world.actors[i], static_cast<int>(i), f.ego_pose, t);
      if (std::abs(box.center.x()) < half_x && std::abs(box.center.y()) < half_y) {
        f.boxes.push_back(box);
      }
    }
    for (const auto& cam : rig.cameras()) {
      f.images.push_back(render_camera(seq.world, cam, f.ego_pose, t));
    }
    f.bev_seg = render_bev_gt(seq.world, grid, f.ego_pose);
    seq.frames.push_back(std::move(f));
  }

  // Boxes must move consistently with their velocities between frames.
  const double dt = 1.0 / spec.frame_hz;
  for (int k = 0; k + 1 < n; ++k) {
    const FrameSample& a = seq.frames[k];
    const FrameSample& b = seq.frames[k + 1];
    for (const GtBox& ba : a.boxes) {
      for (const GtBox& bb : b.boxes) {
        if (ba.track_id != bb.track_id) continue;
        const Eigen::Vector2d wa = ego_to_world(a.ego_pose, ba.center.head<2>());
        const Eigen::Vector2d wb = ego_to_world(b.ego_pose, bb.center.head<2>());
        const Eigen::Vector2d vel = Eigen::Rotation2Dd(a.ego_pose.yaw) * ba.velocity;
        if ((wb - wa - vel * dt).norm() > 1e-6) {
          throw std::logic_error("generate_scene: track " +
                                 std::to_string(ba.track_id) +
                                 " violates constant-velocity motion");
        }
      }
    }
  }
  return seq;
}

std::vector<int> temporal_sampler(int num_frames, double frame_hz, int anchor,
                                  SamplerMode mode, std::mt19937_64& rng) {
  if (anchor < 0 || anchor >= num_frames) {
    throw ValidationError("temporal_sampler: anchor out of range");
  }
  if (mode == SamplerMode::kInfer) {
    if (anchor == 0) return {0};
    return {anchor - 1, anchor};
  }
  const int window = static_cast<int>(std::lround(2.0 * frame_hz));
  const int first = std::max(0, anchor - window);
  std::vector<int> pool;
  for (int i = first; i < anchor; ++i) pool.push_back(i);
  if (pool.size() < 2) {
    std::vector<int> all;
    for (int i = 0; i <= anchor; ++i) all.push_back(i);
    return all;
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<int> out{pool[0], pool[1], anchor};
  std::sort(out.begin(), out.end());
  return out;
}

bool is_validation_scene(int scene_index) { return scene_index % 5 == 4; }

std::vector<SceneSpec> dataset_scene_specs(const DatasetSpec& spec) {
  if (spec.num_scenes <= 0) {
    throw ValidationError("dataset needs at least one scene");
  }
  static const LaneLayout kLayouts[] = {
      LaneLayout::kStraight, LaneLayout::kCurve, LaneLayout::kIntersection};
  std::vector<SceneSpec> out;
  for (int i = 0; i < spec.num_scenes; ++i) {
    SceneSpec s = spec.scene_template;
    s.seed = spec.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    s.lane_layout = kLayouts[i % 3];
    out.push_back(s);
  }
  return out;
}

std::vector<SceneSequence> generate_dataset(const DatasetSpec& spec) {
  const CameraRig rig = default_rig(spec.rig);
  std::vector<SceneSequence> scenes;
  for (const auto& s : dataset_scene_specs(spec)) {
    scenes.push_back(generate_scene(s, rig, spec.grid));
  }
  return scenes;
}

}  // namespace monobev
