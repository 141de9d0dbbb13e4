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

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "nrrdd/binio.hpp"
#include "nrrdd/common.hpp"
#include "nrrdd/tensor.hpp"

namespace nrrdd {

enum class MixMethod : std::uint8_t { kMixup = 0, kCutmix = 1 };

std::string to_string(MixMethod m);
MixMethod parse_mix_method(const std::string& s);

/// Complete description of one mixing operation. `lam` is always exactly
/// representable as a 32-bit float so the binary encoding is lossless.
struct AugmentSpec {
  MixMethod method = MixMethod::kCutmix;
  double lam = 1.0;
  Box box;  // cutmix region taken from the partner; zeros for mixup
  std::uint64_t seed = 0;

  bool operator==(const AugmentSpec&) const = default;
};

inline constexpr std::size_t kAugmentSpecBytes = 24;

/// Spec with lam drawn uniformly from [0, 1) using `seed`.
AugmentSpec sample_spec(MixMethod method, std::uint64_t seed, int height, int width);

/// Spec with a fixed lam; the cutmix box position still derives from `seed`.
/// The box has side round(side * sqrt(1 - lam)) and lies fully inside the image.
AugmentSpec make_spec(MixMethod method, double lam, std::uint64_t seed, int height, int width);

/// x_mix for a single image (all tensors 1 x C x H x W).
Tensor apply(const AugmentSpec& spec, const Tensor& x_org, const Tensor& x_aug);

/// Raw-buffer form of apply for one C x H x W image.
void apply_into(const AugmentSpec& spec, std::span<const double> x_org,
                std::span<const double> x_aug, std::span<double> out, const ImageShape& shape);

/// Accumulates d(x_mix)/d(x_org)^T * d_mix into d_org.
void add_org_grad(const AugmentSpec& spec, std::span<const double> d_mix,
                  std::span<double> d_org, const ImageShape& shape);

/// Fixed 24-byte encoding: method u8, 3 reserved bytes, lam f32, box 4 x u16, seed u64.
std::array<std::uint8_t, kAugmentSpecBytes> encode_spec(const AugmentSpec& spec);
AugmentSpec decode_spec(std::span<const std::uint8_t> bytes);

/// Method-less 20-byte body used inside label stores where the method is in
/// the header.
void put_spec_body(ByteWriter& w, const AugmentSpec& spec);
AugmentSpec get_spec_body(ByteReader& r, MixMethod method);

}  // namespace nrrdd
