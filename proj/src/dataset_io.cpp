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

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "monobev/errors.hpp"
#include "monobev/fileio.hpp"
#include "monobev/synthscene.hpp"

namespace monobev {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor blobs are written in host order");

constexpr char kMagic[4] = {'M', 'B', 'T', '1'};

std::string frame_name(int k, const char* suffix) {
  std::ostringstream os;
  os << "frame_" << std::setw(4) << std::setfill('0') << k << "_" << suffix
     << ".bin";
  return os.str();
}

}  // namespace

void write_tensor_blob(const fs::path& path,
                       const std::vector<std::uint32_t>& dims,
                       const std::vector<float>& data) {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count != data.size()) {
    throw ValidationError("write_tensor_blob: dims do not match data size");
  }
  const auto rank = static_cast<std::uint32_t>(dims.size());
  std::string bytes(kMagic, 4);
  bytes.append(reinterpret_cast<const char*>(&rank), sizeof(rank));
  bytes.append(reinterpret_cast<const char*>(dims.data()),
               dims.size() * sizeof(std::uint32_t));
  bytes.append(reinterpret_cast<const char*>(data.data()),
               data.size() * sizeof(float));
  write_file_atomic(path, bytes);
}

std::vector<float> read_tensor_blob(const fs::path& path,
                                    std::vector<std::uint32_t>& dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  std::uint32_t rank = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || rank > 8) {
    throw IoError("bad tensor header in " + path.string());
  }
  dims.assign(rank, 0);
  in.read(reinterpret_cast<char*>(dims.data()),
          static_cast<std::streamsize>(rank * sizeof(std::uint32_t)));
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw IoError("truncated tensor data in " + path.string());
  return data;
}

json box_to_json(const GtBox& b) {
  return {{"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {b.size.x(), b.size.y(), b.size.z()}},
          {"yaw", b.yaw},
          {"velocity", {b.velocity.x(), b.velocity.y()}},
          {"class_id", b.class_id},
          {"attribute_id", b.attribute_id},
          {"track_id", b.track_id}};
}

GtBox box_from_json(const json& j) {
  GtBox b;
  const auto& c = j.at("center");
  const auto& s = j.at("size");
  const auto& v = j.at("velocity");
  b.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
  b.size = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
  b.yaw = j.at("yaw").get<double>();
  b.velocity = {v.at(0).get<double>(), v.at(1).get<double>()};
  b.class_id = j.at("class_id").get<int>();
  b.attribute_id = j.value("attribute_id", 0);
  b.track_id = j.value("track_id", -1);
  return b;
}

json scene_spec_to_json(const SceneSpec& s) {
  json classes = json::array();
  for (auto c : s.actor_classes) classes.push_back(to_string(c));
  return {{"seed", s.seed},
          {"duration_s", s.duration_s},
          {"frame_hz", s.frame_hz},
          {"num_actors", s.num_actors},
          {"lane_layout", to_string(s.lane_layout)},
          {"actor_classes", classes},
          {"ego_speed", s.ego_speed}};
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.duration_s = j.at("duration_s").get<double>();
  s.frame_hz = j.at("frame_hz").get<double>();
  s.num_actors = j.at("num_actors").get<int>();
  s.lane_layout = lane_layout_from_string(j.at("lane_layout").get<std::string>());
  s.actor_classes.clear();
  for (const auto& c : j.at("actor_classes")) {
    const auto name = c.get<std::string>();
    if (name == "car") {
      s.actor_classes.push_back(ActorClass::kCar);
    } else if (name == "truck") {
      s.actor_classes.push_back(ActorClass::kTruck);
    } else if (name == "pedestrian") {
      s.actor_classes.push_back(ActorClass::kPedestrian);
    } else {
      throw ValidationError("unknown actor class '" + name + "'");
    }
  }
  s.ego_speed = j.value("ego_speed", 6.0);
  return s;
}

json grid_to_json(const BevGridSpec& g) {
  return {{"rows", g.rows},
          {"cols", g.cols},
          {"extent", g.extent},
          {"embed_dim", g.embed_dim}};
}

BevGridSpec grid_from_json(const json& j) {
  BevGridSpec g;
  g.rows = j.at("rows").get<int>();
  g.cols = j.at("cols").get<int>();
  g.extent = j.at("extent").get<double>();
  g.embed_dim = j.value("embed_dim", 32);
  return g;
}

void save_scene(const SceneSequence& scene, const fs::path& dir) {
  fs::create_directories(dir);
  json frames = json::array();
  for (std::size_t k = 0; k < scene.frames.size(); ++k) {
    const FrameSample& f = scene.frames[k];
    const int kk = static_cast<int>(k);
    json boxes = json::array();
    for (const auto& b : f.boxes) boxes.push_back(box_to_json(b));
    frames.push_back({{"index", kk},
                      {"timestamp", f.timestamp},
                      {"ego_pose",
                       {{"position", {f.ego_pose.position.x(), f.ego_pose.position.y()}},
                        {"yaw", f.ego_pose.yaw},
                        {"timestamp", f.ego_pose.timestamp}}},
                      {"boxes", boxes},
                      {"images", frame_name(kk, "images")},
                      {"bev_seg", frame_name(kk, "bevseg")}});

    const auto cams = static_cast<std::uint32_t>(f.images.size());
    const auto h = static_cast<std::uint32_t>(f.images.at(0).height);
    const auto w = static_cast<std::uint32_t>(f.images.at(0).width);
    std::vector<float> img;
    img.reserve(static_cast<std::size_t>(cams) * h * w * 3);
    for (const auto& im : f.images) {
      img.insert(img.end(), im.rgb.data(), im.rgb.data() + im.rgb.size());
    }
    write_tensor_blob(dir / frame_name(kk, "images"), {cams, h, w, 3}, img);

    std::vector<float> seg;
    for (const auto& m : f.bev_seg) seg.insert(seg.end(), m.data(), m.data() + m.size());
    write_tensor_blob(dir / frame_name(kk, "bevseg"),
                      {static_cast<std::uint32_t>(f.bev_seg.size()),
                       static_cast<std::uint32_t>(scene.grid.rows),
                       static_cast<std::uint32_t>(scene.grid.cols)},
                      seg);
  }
  json polys = json::array();
  for (const auto& p : scene.world.polygons) {
    json verts = json::array();
    for (const auto& v : p.vertices) verts.push_back({v.x(), v.y()});
    polys.push_back({{"surface", static_cast<int>(p.surface)}, {"vertices", verts}});
  }
  json actors = json::array();
  for (const auto& a : scene.world.actors) {
    actors.push_back({{"class", to_string(a.cls)},
                      {"position", {a.position.x(), a.position.y()}},
                      {"velocity", {a.velocity.x(), a.velocity.y()}},
                      {"yaw", a.yaw},
                      {"size", {a.size.x(), a.size.y(), a.size.z()}}});
  }
  const json manifest = {{"format", "monobev-scene-v1"},
                         {"spec", scene_spec_to_json(scene.spec)},
                         {"grid", grid_to_json(scene.grid)},
                         {"rig", rig_to_json(scene.rig)},
                         {"world", {{"polygons", polys}, {"actors", actors}}},
                         {"frames", frames}};
  write_file_atomic(dir / "manifest.json", manifest.dump(1));
}

SceneSequence load_scene(const fs::path& dir) {
  const json m = read_json_file(dir / "manifest.json");
  SceneSequence seq;
  try {
    seq.spec = scene_spec_from_json(m.at("spec"));
    seq.grid = grid_from_json(m.at("grid"));
    seq.rig = rig_from_json(m.at("rig"));
    for (const auto& p : m.at("world").at("polygons")) {
      std::vector<Eigen::Vector2d> verts;
      for (const auto& v : p.at("vertices")) {
        verts.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
      }
      seq.world.polygons.emplace_back(
          static_cast<SurfaceClass>(p.at("surface").get<int>()), std::move(verts));
    }
    for (const auto& a : m.at("world").at("actors")) {
      Actor actor;
      const auto cls = a.at("class").get<std::string>();
      actor.cls = cls == "truck" ? ActorClass::kTruck
                  : cls == "pedestrian" ? ActorClass::kPedestrian
                                        : ActorClass::kCar;
      actor.position = {a.at("position").at(0).get<double>(),
                        a.at("position").at(1).get<double>()};
      actor.velocity = {a.at("velocity").at(0).get<double>(),
                        a.at("velocity").at(1).get<double>()};
      actor.yaw = a.at("yaw").get<double>();
      actor.size = {a.at("size").at(0).get<double>(), a.at("size").at(1).get<double>(),
                    a.at("size").at(2).get<double>()};
      seq.world.actors.push_back(actor);
    }
    for (const auto& fj : m.at("frames")) {
      FrameSample f;
      f.timestamp = fj.at("timestamp").get<double>();
      const auto& pj = fj.at("ego_pose");
      f.ego_pose.position = {pj.at("position").at(0).get<double>(),
                             pj.at("position").at(1).get<double>()};
      f.ego_pose.yaw = pj.at("yaw").get<double>();
      f.ego_pose.timestamp = pj.at("timestamp").get<double>();
      for (const auto& b : fj.at("boxes")) f.boxes.push_back(box_from_json(b));

      std::vector<std::uint32_t> dims;
      const auto img = read_tensor_blob(dir / fj.at("images").get<std::string>(), dims);
      if (dims.size() != 4 || dims[0] != seq.rig.size() || dims[3] != 3) {
        throw IoError("unexpected image tensor shape in " + dir.string());
      }
      const std::size_t per = static_cast<std::size_t>(dims[1]) * dims[2] * 3;
      for (std::uint32_t c = 0; c < dims[0]; ++c) {
        Image im(static_cast<int>(dims[1]), static_cast<int>(dims[2]));
        std::copy_n(img.data() + c * per, per, im.rgb.data());
        f.images.push_back(std::move(im));
      }
      const auto seg = read_tensor_blob(dir / fj.at("bev_seg").get<std::string>(), dims);
      if (dims.size() != 3 || static_cast<int>(dims[1]) != seq.grid.rows ||
          static_cast<int>(dims[2]) != seq.grid.cols) {
        throw IoError("unexpected bev_seg tensor shape in " + dir.string());
      }
      const std::size_t cells = static_cast<std::size_t>(dims[1]) * dims[2];
      for (std::uint32_t c = 0; c < dims[0]; ++c) {
        Mask2d mk(seq.grid.rows, seq.grid.cols);
        std::copy_n(seg.data() + c * cells, cells, mk.data());
        f.bev_seg.push_back(std::move(mk));
      }
      seq.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  return seq;
}

void save_dataset(const std::vector<SceneSequence>& scenes, const fs::path& dir) {
  fs::create_directories(dir);
  json index = json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i;
    save_scene(scenes[i], dir / name.str());
    index.push_back(name.str());
  }
  write_file_atomic(dir / "dataset.json",
                    json{{"format", "monobev-dataset-v1"}, {"scenes", index}}.dump(1));
}

std::vector<SceneSequence> load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "dataset.json")) {
    throw IoError("no dataset at " + dir.string());
  }
  const json index = read_json_file(dir / "dataset.json");
  std::vector<SceneSequence> scenes;
  for (const auto& name : index.at("scenes")) {
    scenes.push_back(load_scene(dir / name.get<std::string>()));
  }
  return scenes;
}

}  // namespace monobev
