// Copyright 2026 The nrrdd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <vector>

#include "nrrdd/common.hpp"
#include "nrrdd/tensor.hpp"

namespace nrrdd {

/// Row-major 2-D grid of doubles (CAMs, masks).
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t size() const { return values.size(); }
};

/// Copies a region of image `i` of `src` into a new 1 x C x h x w tensor.
Tensor crop(const Tensor& src, int i, const Box& box);

/// Separable bilinear resize with a triangle filter whose support widens when
/// downscaling (anti-aliased, pixel-centre sampling). All weights are
/// non-negative, so the output stays inside the input's value range.
Tensor resize_bilinear(const Tensor& img, int out_h, int out_w);

/// Bilinear upsampling with aligned corners: output corners equal input corners.
Plane resize_align_corners(const Plane& p, int out_h, int out_w);

Tensor hflip(const Tensor& img);

/// Writes image 0 of `img` as binary PPM (3 channels) or PGM (1 channel),
/// mapping [lo, hi] per channel to [0, 255].
void write_pnm(const std::filesystem::path& path, const Tensor& img,
               const std::vector<double>& lo, const std::vector<double>& hi);

/// Heat map of a plane with values in [0, 1] as PGM.
void write_pgm(const std::filesystem::path& path, const Plane& p);

}  // namespace nrrdd
