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

#include <filesystem>
#include <fstream>
#include <iterator>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "monobev/checkpoint.hpp"
#include "monobev/errors.hpp"
#include "monobev/fileio.hpp"
#include "monobev/synthscene.hpp"
#include "support/oracles.hpp"

namespace monobev {
namespace {

namespace fs = std::filesystem;

class ScratchDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("monobev_io_" + std::to_string(::getpid()) + "_" +
           ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string slurp(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  void dump(const fs::path& p, const std::string& bytes) const {
    std::ofstream(p, std::ios::binary) << bytes;
  }

  fs::path dir;
};

using CheckpointFile = ScratchDir;

TEST_F(CheckpointFile, LayoutStartsWithMagicAndHeaderLength) {
  Checkpoint c;
  c.header = {{"note", "x"}};
  c.tensors["a"] = ad::Tensor::Constant(2, 3, 0.5);
  save_checkpoint(dir / "c.ckpt", c);
  const std::string bytes = slurp(dir / "c.ckpt");
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 8), "MBCKPT01");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  const auto header = nlohmann::json::parse(bytes.substr(16, len));
  EXPECT_EQ(header.at("note"), "x");
  EXPECT_EQ(header.at("tensors")[0].at("name"), "a");
  EXPECT_EQ(header.at("tensors")[0].at("shape"), nlohmann::json({2, 3}));
  EXPECT_EQ(bytes.size(), 16 + len + 6 * sizeof(double));
}

TEST_F(CheckpointFile, RoundTripIsBitExact) {
  Checkpoint c;
  c.header = {{"epoch", 7}};
  ad::Tensor t(3, 2);
  t << 1.0 / 3.0, -0.0, 1e-310, 6.02e23, -7.5, std::nextafter(1.0, 2.0);
  c.tensors["z/tensor"] = t;
  c.tensors["empty"] = ad::Tensor(0, 4);
  save_checkpoint(dir / "c.ckpt", c);
  const Checkpoint back = load_checkpoint(dir / "c.ckpt");
  EXPECT_EQ(back.header.at("epoch"), 7);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(std::memcmp(back.tensors.at("z/tensor").data(), t.data(), sizeof(double) * 6), 0);
  EXPECT_EQ(back.tensors.at("empty").cols(), 4);
}

TEST_F(CheckpointFile, CorruptionIsAnIoError) {
  Checkpoint c;
  c.tensors["a"] = ad::Tensor::Ones(4, 4);
  save_checkpoint(dir / "c.ckpt", c);
  const std::string good = slurp(dir / "c.ckpt");

  dump(dir / "magic.ckpt", "XBCKPT01" + good.substr(8));
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), IoError);
  dump(dir / "short.ckpt", good.substr(0, good.size() - 8));
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), IoError);
  dump(dir / "header.ckpt", good.substr(0, 20));
  EXPECT_THROW(load_checkpoint(dir / "header.ckpt"), IoError);
  std::string garbled = good;
  garbled[17] = '#';
  dump(dir / "json.ckpt", garbled);
  EXPECT_THROW(load_checkpoint(dir / "json.ckpt"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST_F(CheckpointFile, ModelRoundTrip) {
  const CameraRig rig = testing::toy_rig();
  const ModelConfig cfg = testing::toy_model_config(rig);
  const BevModel model(cfg, 42);
  EXPECT_EQ(model_config_from_json(model_config_to_json(cfg)).grid, cfg.grid);
  EXPECT_EQ(json_hash(model_config_to_json(cfg)),
            json_hash(model_config_to_json(model_config_from_json(model_config_to_json(cfg)))));

  Checkpoint c;
  c.header["model"] = model_config_to_json(cfg);
  store_parameters(model.params(), c);
  EXPECT_EQ(c.tensors.size(), model.params().size());
  save_checkpoint(dir / "m.ckpt", c);
  const BevModel back = load_model(dir / "m.ckpt");
  for (const auto& name : model.params().names()) {
    EXPECT_EQ(back.params().get(name).value(), model.params().get(name).value()) << name;
  }

  Checkpoint missing = c;
  missing.tensors.erase(missing.tensors.begin());
  BevModel target(cfg, 1);
  EXPECT_THROW(restore_parameters(missing, target.params()), ValidationError);
  Checkpoint reshaped = c;
  reshaped.tensors.at("param/bev_queries") = ad::Tensor::Zero(1, 1);
  EXPECT_THROW(restore_parameters(reshaped, target.params()), ValidationError);
  Checkpoint bare;
  save_checkpoint(dir / "bare.ckpt", bare);
  EXPECT_THROW(load_model(dir / "bare.ckpt"), ValidationError);
}

TEST(JsonHash, IsFnv1aOfCompactDump) {
  // FNV-1a 64 of the two bytes "{}".
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : std::string("{}")) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  EXPECT_EQ(json_hash(nlohmann::json::object()), h);
  EXPECT_NE(json_hash({{"a", 1}}), json_hash({{"a", 2}}));
}

using AtomicWrite = ScratchDir;

TEST_F(AtomicWrite, ReplacesWholeFilesAndLeavesNoTemporaries) {
  write_file_atomic(dir / "f.json", R"({"v": 1})");
  write_file_atomic(dir / "f.json", R"({"v": 2})");
  EXPECT_EQ(read_json_file(dir / "f.json").at("v"), 2);
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1);  // no leftover .tmp
  write_file_atomic(dir / "new" / "sub" / "f.json", "{}");
  EXPECT_TRUE(fs::exists(dir / "new" / "sub" / "f.json"));
  EXPECT_THROW(write_file_atomic(dir / "f.json" / "below", "x"), IoError);
  dump(dir / "bad.json", "{");
  EXPECT_THROW(read_json_file(dir / "bad.json"), IoError);
  EXPECT_THROW(read_json_file(dir / "none.json"), IoError);
}

using TensorBlob = ScratchDir;

TEST_F(TensorBlob, RoundTripAndHeader) {
  const std::vector<float> data{1.5f, -2.0f, 0.25f, 8.0f, 3.0f, 7.0f};
  write_tensor_blob(dir / "t.bin", {2, 3}, data);
  const std::string bytes = slurp(dir / "t.bin");
  EXPECT_EQ(bytes.substr(0, 4), "MBT1");
  EXPECT_EQ(bytes.size(), 4 + 4 + 2 * 4 + 6 * 4u);
  std::vector<std::uint32_t> dims;
  EXPECT_EQ(read_tensor_blob(dir / "t.bin", dims), data);
  EXPECT_EQ(dims, (std::vector<std::uint32_t>{2, 3}));
  EXPECT_THROW(write_tensor_blob(dir / "u.bin", {4}, data), ValidationError);
  dump(dir / "cut.bin", bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(read_tensor_blob(dir / "cut.bin", dims), IoError);
}

using DatasetFiles = ScratchDir;

TEST_F(DatasetFiles, SaveLoadRoundTrip) {
  DatasetSpec ds;
  ds.seed = 8;
  ds.num_scenes = 2;
  ds.scene_template.duration_s = 2.0;
  ds.rig.image_height = 16;
  ds.rig.image_width = 24;
  ds.grid.rows = ds.grid.cols = 6;
  const auto scenes = generate_dataset(ds);
  save_dataset(scenes, dir / "data");
  EXPECT_TRUE(fs::exists(dir / "data" / "dataset.json"));
  EXPECT_TRUE(fs::exists(dir / "data" / "scene_0001" / "manifest.json"));
  EXPECT_EQ(read_json_file(dir / "data" / "dataset.json").at("format"), "monobev-dataset-v1");

  const auto back = load_dataset(dir / "data");
  ASSERT_EQ(back.size(), scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    EXPECT_EQ(back[s].rig, scenes[s].rig);
    EXPECT_EQ(back[s].grid, scenes[s].grid);
    ASSERT_EQ(back[s].frames.size(), scenes[s].frames.size());
    for (std::size_t f = 0; f < scenes[s].frames.size(); ++f) {
      const FrameSample& a = scenes[s].frames[f];
      const FrameSample& b = back[s].frames[f];
      EXPECT_EQ(a.images, b.images);
      EXPECT_EQ(a.boxes, b.boxes);
      EXPECT_EQ(a.ego_pose, b.ego_pose);
      EXPECT_EQ(a.timestamp, b.timestamp);
      ASSERT_EQ(a.bev_seg.size(), b.bev_seg.size());
      for (std::size_t k = 0; k < a.bev_seg.size(); ++k) EXPECT_TRUE((a.bev_seg[k] == b.bev_seg[k]).all());
    }
  }
  EXPECT_THROW(load_dataset(dir / "nothing"), IoError);
}

using RigFile = ScratchDir;

TEST_F(RigFile, JsonOnDisk) {
  const CameraRig rig = default_rig();
  write_file_atomic(dir / "rig.json", rig_to_json(rig).dump(2));
  EXPECT_EQ(rig_from_json(read_json_file(dir / "rig.json")), rig);
}

}  // namespace
}  // namespace monobev
