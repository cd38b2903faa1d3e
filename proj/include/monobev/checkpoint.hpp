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

// Checkpoint container:
//
//   8 bytes   magic "MBCKPT01"
//   uint64    header length L (little endian)
//   L bytes   UTF-8 JSON header
//   payload   float64 little-endian tensors, row-major, in header order
//
// The header lists every tensor as {"name", "shape": [rows, cols],
// "offset": first element index in the payload}. Doubles are stored bit for
// bit, so a restored model reproduces the saved one exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "monobev/autodiff.hpp"
#include "monobev/bevmodel.hpp"

namespace monobev {

struct Checkpoint {
  nlohmann::json header;  // caller fields; "tensors" is managed here
  std::map<std::string, ad::Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// FNV-1a over the compact dump of `j`.
std::uint64_t json_hash(const nlohmann::json& j);

// Copies parameter values into a checkpoint under "param/<name>".
void store_parameters(const ParameterStore& params, Checkpoint& ckpt);
// Restores every parameter; names and shapes must match exactly.
void restore_parameters(const Checkpoint& ckpt, ParameterStore& params);

// A model rebuilt from a checkpoint's "model" header and its parameters.
BevModel load_model(const std::filesystem::path& path);

}  // namespace monobev
