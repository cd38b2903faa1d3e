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

#include <Eigen/Dense>

namespace monobev {

// Interleaved RGB image, values in [0, 1]. Stored as height x (3 * width).
struct Image {
  using Storage =
      Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), rgb(Storage::Constant(h, 3 * w, fill)) {}

  float& at(int y, int x, int c) { return rgb(y, 3 * x + c); }
  float at(int y, int x, int c) const { return rgb(y, 3 * x + c); }

  bool operator==(const Image& o) const {
    return height == o.height && width == o.width && rgb == o.rgb;
  }

  int height = 0;
  int width = 0;
  Storage rgb;
};

}  // namespace monobev
