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

#include "monobev/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "monobev/errors.hpp"
#include "monobev/fileio.hpp"
#include "monobev/synthscene.hpp"

namespace monobev {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written in host order");

constexpr char kMagic[8] = {'M', 'B', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  json header = ckpt.header;
  json index = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    index.push_back({{"name", name},
                     {"shape", {t.rows(), t.cols()}},
                     {"offset", offset}});
    offset += static_cast<std::size_t>(t.size());
  }
  header["tensors"] = index;
  const std::string text = header.dump();
  const auto len = static_cast<std::uint64_t>(text.size());

  std::string bytes(kMagic, sizeof(kMagic));
  bytes.append(reinterpret_cast<const char*>(&len), sizeof(len));
  bytes += text;
  bytes.reserve(bytes.size() + offset * sizeof(double));
  for (const auto& [_, t] : ckpt.tensors) {
    bytes.append(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::size_t>(t.size()) * sizeof(double));
  }
  write_file_atomic(path, bytes);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::size_t prefix = sizeof(kMagic) + sizeof(std::uint64_t);
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof(kMagic), sizeof(len));
  if (bytes.size() < prefix + len) throw IoError(path.string() + ": truncated header");

  Checkpoint ckpt;
  try {
    ckpt.header = json::parse(bytes.substr(prefix, len));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed header: " + e.what());
  }
  const std::size_t payload = prefix + len;
  const std::size_t available = (bytes.size() - payload) / sizeof(double);
  try {
    for (const json& e : ckpt.header.at("tensors")) {
      const auto rows = e.at("shape").at(0).get<Eigen::Index>();
      const auto cols = e.at("shape").at(1).get<Eigen::Index>();
      const auto offset = e.at("offset").get<std::size_t>();
      if (rows < 0 || cols < 0 ||
          offset + static_cast<std::size_t>(rows * cols) > available) {
        throw IoError(path.string() + ": tensor exceeds payload");
      }
      ad::Tensor t(rows, cols);
      std::memcpy(t.data(), bytes.data() + payload + offset * sizeof(double),
                  static_cast<std::size_t>(t.size()) * sizeof(double));
      ckpt.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": bad tensor index: " + e.what());
  }
  ckpt.header.erase("tensors");
  return ckpt;
}

json model_config_to_json(const ModelConfig& c) {
  return {{"grid", grid_to_json(c.grid)},
          {"pillars",
           {{"z_min", c.pillars.z_min},
            {"z_max", c.pillars.z_max},
            {"num_heights", c.pillars.num_heights}}},
          {"image_height", c.image_height},
          {"image_width", c.image_width},
          {"patch_size", c.patch_size},
          {"feat_dim", c.feat_dim},
          {"num_heads", c.num_heads},
          {"num_points", c.num_points},
          {"num_layers", c.num_layers},
          {"ffn_dim", c.ffn_dim},
          {"num_classes", c.num_classes},
          {"num_seg_classes", c.num_seg_classes},
          {"detach_history", c.detach_history}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.grid = grid_from_json(j.at("grid"));
    c.pillars.z_min = j.at("pillars").at("z_min").get<double>();
    c.pillars.z_max = j.at("pillars").at("z_max").get<double>();
    c.pillars.num_heights = j.at("pillars").at("num_heights").get<int>();
    c.image_height = j.at("image_height").get<int>();
    c.image_width = j.at("image_width").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.feat_dim = j.at("feat_dim").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.num_points = j.at("num_points").get<int>();
    c.num_layers = j.at("num_layers").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.num_seg_classes = j.at("num_seg_classes").get<int>();
    c.detach_history = j.at("detach_history").get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t json_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

void store_parameters(const ParameterStore& params, Checkpoint& ckpt) {
  for (const std::string& name : params.names()) {
    ckpt.tensors["param/" + name] = params.get(name).value();
  }
}

void restore_parameters(const Checkpoint& ckpt, ParameterStore& params) {
  for (const std::string& name : params.names()) {
    auto it = ckpt.tensors.find("param/" + name);
    if (it == ckpt.tensors.end()) {
      throw ValidationError("checkpoint lacks parameter " + name);
    }
    ad::Var v = params.get(name);
    if (it->second.rows() != v.rows() || it->second.cols() != v.cols()) {
      throw ValidationError("checkpoint shape mismatch for " + name);
    }
    v.mutable_value() = it->second;
  }
}

BevModel load_model(const fs::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.header.contains("model")) {
    throw ValidationError(path.string() + ": checkpoint has no model config");
  }
  BevModel model(model_config_from_json(ckpt.header.at("model")), 0);
  restore_parameters(ckpt, model.params());
  return model;
}

}  // namespace monobev
