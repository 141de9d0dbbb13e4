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

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nrrdd/common.hpp"

namespace nrrdd {

/// Dense NCHW tensor of doubles. Parameters of rank < 4 use trailing
/// dimensions of 1 (a K x F matrix is stored as n=K, c=F, h=w=1).
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0)
      : n_(n), c_(c), h_(h), w_(w),
        data_(static_cast<std::size_t>(n) * c * h * w, fill) {
    require(n >= 0 && c >= 0 && h >= 0 && w >= 0, ErrorCode::kInvalidArgument,
            "negative tensor dimension");
  }
  Tensor(int n, const ImageShape& s, double fill = 0.0)
      : Tensor(n, s.channels, s.height, s.width, fill) {}

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  ImageShape image_shape() const { return {c_, h_, w_}; }
  std::size_t image_size() const {
    return static_cast<std::size_t>(c_) * h_ * w_;
  }
  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }
  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  std::span<double> image_span(int i) {
    return {data_.data() + static_cast<std::size_t>(i) * image_size(),
            image_size()};
  }
  std::span<const double> image_span(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * image_size(),
            image_size()};
  }

  /// Copy of image i as a 1 x C x H x W tensor.
  Tensor image(int i) const {
    Tensor out(1, c_, h_, w_);
    auto src = image_span(i);
    std::copy(src.begin(), src.end(), out.data());
    return out;
  }
  void set_image(int i, const Tensor& img) {
    require(img.image_size() == image_size() && img.n() >= 1,
            ErrorCode::kShapeMismatch, "set_image: shape mismatch");
    std::copy(img.data(), img.data() + image_size(), image_span(i).begin());
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  static Tensor stack(std::span<const Tensor> images) {
    require(!images.empty(), ErrorCode::kInvalidArgument, "stack: empty");
    const ImageShape s = images.front().image_shape();
    Tensor out(static_cast<int>(images.size()), s);
    for (std::size_t i = 0; i < images.size(); ++i) {
      require(images[i].image_shape() == s, ErrorCode::kShapeMismatch,
              "stack: shape mismatch");
      out.set_image(static_cast<int>(i), images[i]);
    }
    return out;
  }

  bool operator==(const Tensor& o) const {
    return same_shape(o) && data_ == o.data_;
  }

 private:
  int n_ = 0;
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.n()) + "," + std::to_string(t.c()) + "," +
         std::to_string(t.h()) + "," + std::to_string(t.w()) + ")";
}

}  // namespace nrrdd
