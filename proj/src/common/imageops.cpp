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

#include "nrrdd/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "nrrdd/binio.hpp"

namespace nrrdd {

namespace {

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

// One set of filter taps per output coordinate, normalised to sum 1.
std::vector<Taps> triangle_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double support = std::max(1.0, scale);
  std::vector<Taps> taps(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double centre = (o + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(centre - support)));
    const int hi = std::min(in_size - 1, static_cast<int>(std::ceil(centre + support)));
    Taps& t = taps[o];
    t.first = lo;
    double sum = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double d = std::abs((i + 0.5) - centre) / support;
      const double wgt = std::max(0.0, 1.0 - d);
      t.weights.push_back(wgt);
      sum += wgt;
    }
    if (sum <= 0.0) {
      // Degenerate support (cannot happen for support >= 1, kept for safety
      // on 1-pixel inputs): nearest neighbour.
      t.weights.assign(t.weights.size(), 0.0);
      const int nearest = std::clamp(static_cast<int>(centre), lo, hi);
      t.weights[nearest - lo] = 1.0;
      sum = 1.0;
    }
    for (double& wgt : t.weights) wgt /= sum;
  }
  return taps;
}

}  // namespace

Tensor crop(const Tensor& src, int i, const Box& box) {
  require(!box.empty() && box.inside(src.h(), src.w()), ErrorCode::kInvalidArgument,
          "crop box outside image");
  Tensor out(1, src.c(), box.height, box.width);
  for (int c = 0; c < src.c(); ++c)
    for (int y = 0; y < box.height; ++y)
      for (int x = 0; x < box.width; ++x)
        out.at(0, c, y, x) = src.at(i, c, box.top + y, box.left + x);
  return out;
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  require(out_h > 0 && out_w > 0, ErrorCode::kInvalidArgument, "resize: empty target");
  if (img.h() == out_h && img.w() == out_w) return img;
  const auto ty = triangle_taps(img.h(), out_h);
  const auto tx = triangle_taps(img.w(), out_w);
  Tensor tmp(img.n(), img.c(), img.h(), out_w);
  for (int n = 0; n < img.n(); ++n)
    for (int c = 0; c < img.c(); ++c)
      for (int y = 0; y < img.h(); ++y)
        for (int x = 0; x < out_w; ++x) {
          double acc = 0.0;
          const Taps& t = tx[x];
          for (std::size_t k = 0; k < t.weights.size(); ++k)
            acc += t.weights[k] * img.at(n, c, y, t.first + static_cast<int>(k));
          tmp.at(n, c, y, x) = acc;
        }
  Tensor out(img.n(), img.c(), out_h, out_w);
  for (int n = 0; n < img.n(); ++n)
    for (int c = 0; c < img.c(); ++c)
      for (int y = 0; y < out_h; ++y) {
        const Taps& t = ty[y];
        for (int x = 0; x < out_w; ++x) {
          double acc = 0.0;
          for (std::size_t k = 0; k < t.weights.size(); ++k)
            acc += t.weights[k] * tmp.at(n, c, t.first + static_cast<int>(k), x);
          out.at(n, c, y, x) = acc;
        }
      }
  return out;
}

Plane resize_align_corners(const Plane& p, int out_h, int out_w) {
  require(out_h > 0 && out_w > 0 && p.height > 0 && p.width > 0,
          ErrorCode::kInvalidArgument, "resize: degenerate size");
  Plane out(out_h, out_w);
  auto coord = [](int o, int in, int outn, int& i0, int& i1, double& f) {
    const double src = outn > 1 ? static_cast<double>(o) * (in - 1) / (outn - 1) : 0.0;
    i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    f = src - i0;
  };
  for (int y = 0; y < out_h; ++y) {
    int y0, y1;
    double fy;
    coord(y, p.height, out_h, y0, y1, fy);
    for (int x = 0; x < out_w; ++x) {
      int x0, x1;
      double fx;
      coord(x, p.width, out_w, x0, x1, fx);
      const double top = p.at(y0, x0) + fx * (p.at(y0, x1) - p.at(y0, x0));
      const double bot = p.at(y1, x0) + fx * (p.at(y1, x1) - p.at(y1, x0));
      out.at(y, x) = top + fy * (bot - top);
    }
  }
  return out;
}

Tensor hflip(const Tensor& img) {
  Tensor out(img.n(), img.c(), img.h(), img.w());
  for (int n = 0; n < img.n(); ++n)
    for (int c = 0; c < img.c(); ++c)
      for (int y = 0; y < img.h(); ++y)
        for (int x = 0; x < img.w(); ++x)
          out.at(n, c, y, x) = img.at(n, c, y, img.w() - 1 - x);
  return out;
}

void write_pnm(const std::filesystem::path& path, const Tensor& img,
               const std::vector<double>& lo, const std::vector<double>& hi) {
  require(img.c() == 1 || img.c() == 3, ErrorCode::kInvalidArgument,
          "write_pnm: need 1 or 3 channels");
  const std::string header = std::string(img.c() == 3 ? "P6\n" : "P5\n") +
                             std::to_string(img.w()) + " " + std::to_string(img.h()) +
                             "\n255\n";
  ByteWriter w;
  w.put_string(header);
  for (int y = 0; y < img.h(); ++y)
    for (int x = 0; x < img.w(); ++x)
      for (int c = 0; c < img.c(); ++c) {
        const double span = hi[c] - lo[c];
        const double t = span > 0 ? (img.at(0, c, y, x) - lo[c]) / span : 0.0;
        w.put(static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0)));
      }
  write_file(path, w.bytes());
}

void write_pgm(const std::filesystem::path& path, const Plane& p) {
  Tensor t(1, 1, p.height, p.width);
  std::copy(p.values.begin(), p.values.end(), t.data());
  write_pnm(path, t, {0.0}, {1.0});
}

}  // namespace nrrdd
