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

// Atomic artifact writes: data lands in a sibling temporary file that is
// renamed over the destination, so readers never see a partial file.

#include <filesystem>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace monobev {

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace monobev
