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

#include "nrrdd/mixer.hpp"

#include <cmath>
#include <limits>

#include "nrrdd/rng.hpp"

namespace nrrdd {

std::string to_string(MixMethod m) { return m == MixMethod::kMixup ? "mixup" : "cutmix"; }

MixMethod parse_mix_method(const std::string& s) {
  if (s == "mixup") return MixMethod::kMixup;
  if (s == "cutmix") return MixMethod::kCutmix;
  fail(ErrorCode::kConfig, "unknown mix method '" + s + "' (expected mixup or cutmix)");
}

AugmentSpec make_spec(MixMethod method, double lam, std::uint64_t seed, int height, int width) {
  require(lam >= 0.0 && lam <= 1.0, ErrorCode::kInvalidArgument, "lam must lie in [0, 1]");
  require(height > 0 && width > 0 && height <= std::numeric_limits<std::uint16_t>::max() &&
              width <= std::numeric_limits<std::uint16_t>::max(),
          ErrorCode::kInvalidArgument, "image size out of range for a mix spec");
  AugmentSpec s;
  s.method = method;
  s.lam = static_cast<double>(static_cast<float>(lam));
  s.seed = seed;
  if (method == MixMethod::kMixup) return s;
  const double side = std::sqrt(1.0 - s.lam);
  const int bh = static_cast<int>(std::lround(height * side));
  const int bw = static_cast<int>(std::lround(width * side));
  if (bh == 0 || bw == 0) return s;
  Rng rng(derive_seed(seed, {0xb0c5}));
  s.box.height = bh;
  s.box.width = bw;
  s.box.top = static_cast<int>(uniform_index(rng, height - bh + 1));
  s.box.left = static_cast<int>(uniform_index(rng, width - bw + 1));
  return s;
}

AugmentSpec sample_spec(MixMethod method, std::uint64_t seed, int height, int width) {
  Rng rng(derive_seed(seed, {0x1a3b}));
  return make_spec(method, uniform01(rng), seed, height, width);
}

void apply_into(const AugmentSpec& spec, std::span<const double> x_org,
                std::span<const double> x_aug, std::span<double> out, const ImageShape& shape) {
  require(x_org.size() == shape.size() && x_aug.size() == shape.size() &&
              out.size() == shape.size(),
          ErrorCode::kShapeMismatch, "mix: image shapes differ");
  if (spec.method == MixMethod::kMixup) {
    const double a = spec.lam, b = 1.0 - spec.lam;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x_org[i] + b * x_aug[i];
    return;
  }
  require(spec.box.empty() || spec.box.inside(shape.height, shape.width),
          ErrorCode::kInvalidArgument, "cutmix box outside the image");
  std::copy(x_org.begin(), x_org.end(), out.begin());
  if (spec.box.empty()) return;
  for (int c = 0; c < shape.channels; ++c)
    for (int y = spec.box.top; y < spec.box.top + spec.box.height; ++y) {
      const std::size_t row = (static_cast<std::size_t>(c) * shape.height + y) * shape.width;
      for (int x = spec.box.left; x < spec.box.left + spec.box.width; ++x)
        out[row + x] = x_aug[row + x];
    }
}

Tensor apply(const AugmentSpec& spec, const Tensor& x_org, const Tensor& x_aug) {
  require(x_org.same_shape(x_aug), ErrorCode::kShapeMismatch,
          "mix: shapes " + shape_string(x_org) + " and " + shape_string(x_aug) + " differ");
  Tensor out(1, x_org.image_shape());
  apply_into(spec, x_org.image_span(0), x_aug.image_span(0), out.image_span(0),
             x_org.image_shape());
  return out;
}

void add_org_grad(const AugmentSpec& spec, std::span<const double> d_mix,
                  std::span<double> d_org, const ImageShape& shape) {
  require(d_mix.size() == shape.size() && d_org.size() == shape.size(),
          ErrorCode::kShapeMismatch, "mix gradient: shape mismatch");
  if (spec.method == MixMethod::kMixup) {
    for (std::size_t i = 0; i < d_org.size(); ++i) d_org[i] += spec.lam * d_mix[i];
    return;
  }
  for (int c = 0; c < shape.channels; ++c)
    for (int y = 0; y < shape.height; ++y) {
      const std::size_t row = (static_cast<std::size_t>(c) * shape.height + y) * shape.width;
      for (int x = 0; x < shape.width; ++x)
        if (!spec.box.contains(y, x)) d_org[row + x] += d_mix[row + x];
    }
}

void put_spec_body(ByteWriter& w, const AugmentSpec& spec) {
  w.put(static_cast<float>(spec.lam));
  w.put(static_cast<std::uint16_t>(spec.box.top));
  w.put(static_cast<std::uint16_t>(spec.box.left));
  w.put(static_cast<std::uint16_t>(spec.box.height));
  w.put(static_cast<std::uint16_t>(spec.box.width));
  w.put(spec.seed);
}

AugmentSpec get_spec_body(ByteReader& r, MixMethod method) {
  AugmentSpec s;
  s.method = method;
  s.lam = r.get<float>();
  s.box.top = r.get<std::uint16_t>();
  s.box.left = r.get<std::uint16_t>();
  s.box.height = r.get<std::uint16_t>();
  s.box.width = r.get<std::uint16_t>();
  s.seed = r.get<std::uint64_t>();
  return s;
}

std::array<std::uint8_t, kAugmentSpecBytes> encode_spec(const AugmentSpec& spec) {
  ByteWriter w;
  w.put(static_cast<std::uint8_t>(spec.method));
  for (int i = 0; i < 3; ++i) w.put(std::uint8_t{0});
  put_spec_body(w, spec);
  std::array<std::uint8_t, kAugmentSpecBytes> out{};
  std::copy(w.bytes().begin(), w.bytes().end(), out.begin());
  return out;
}

AugmentSpec decode_spec(std::span<const std::uint8_t> bytes) {
  require(bytes.size() == kAugmentSpecBytes, ErrorCode::kCorrupt, "mix spec must be 24 bytes");
  ByteReader r(bytes);
  const auto m = r.get<std::uint8_t>();
  require(m <= 1, ErrorCode::kCorrupt, "unknown mix method code");
  r.get_bytes(3);
  return get_spec_body(r, static_cast<MixMethod>(m));
}

}  // namespace nrrdd
