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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nrrdd/cidd.hpp"
#include "nrrdd/mixer.hpp"
#include "nrrdd/model.hpp"

namespace nrrdd {

enum class LabelMode : std::uint8_t { kDbr = 0, kSl = 1, kCl = 2, kOh = 3 };

std::string to_string(LabelMode m);
LabelMode parse_label_mode(const std::string& s);

/// One stored training pair. Which fields are meaningful depends on the mode:
/// DBR keeps the two distances, SL keeps the full soft label in `probs`, CL
/// keeps the two entries for y_org and y_aug in `probs`, OH keeps only
/// org_idx and y_org.
struct LabelRecord {
  std::uint32_t org_idx = 0;
  std::uint32_t aug_idx = 0;
  int y_org = 0;
  int y_aug = 0;
  AugmentSpec spec;
  float d_org = 0.0f;
  float d_aug = 0.0f;
  std::vector<float> probs;

  bool operator==(const LabelRecord&) const = default;
};

struct LabelStore {
  LabelMode mode = LabelMode::kDbr;
  MixMethod mix = MixMethod::kCutmix;
  std::uint32_t num_classes = 0;
  std::vector<LabelRecord> records;

  bool operator==(const LabelStore&) const = default;
};

inline constexpr std::uint16_t kStoreVersion = 1;
inline constexpr std::size_t kStoreHeaderBytes = 16;
inline constexpr std::size_t kStoreFooterBytes = 4;

/// Serialized bytes per record for a mode and class count.
std::size_t record_bytes(LabelMode mode, std::uint32_t num_classes);
/// Bytes per record that carry label information (distances or probabilities).
std::size_t label_data_bytes(LabelMode mode, std::uint32_t num_classes);
/// Total file size for `count` records.
std::size_t store_bytes(LabelMode mode, std::uint32_t num_classes, std::size_t count);

/// Teacher probabilities on a mixed image (image 0 of `x_mix`).
std::vector<double> soft_label(const ModelSnapshot& model, const Tensor& x_mix);

/// (-ln(p[y_org] + floor), -ln(p[y_aug] + floor)); rejects non-probability vectors.
std::pair<double, double> dbr_distances(std::span<const double> y_soft, int y_org, int y_aug);

struct RelabelConfig {
  LabelMode mode = LabelMode::kDbr;
  int pairs_per_image = 1;
  bool allow_unrefined = false;
  MixMethod mix = MixMethod::kCutmix;
  bool same_class_partner = false;
  std::uint64_t seed = 0;
};

/// Builds the store. Pair 0 of each image reuses the partner and spec kept
/// by refinement when present; further pairs are drawn fresh. In DBR mode
/// the pair-0 distances are also written back onto the records.
LabelStore relabel(const ModelSnapshot& model, std::vector<SyntheticRecord>& records,
                   const RelabelConfig& cfg);

/// Stacks the record images into one N x C x H x W tensor.
Tensor record_images(const std::vector<SyntheticRecord>& records);

/// x_mix of a stored pair, rebuilt from the synthetic images.
Tensor reconstruct_mix(const Tensor& images, const LabelRecord& rec);

/// Teacher distances recomputed from the stored indices and spec.
std::vector<std::pair<double, double>> recompute_distances(const ModelSnapshot& model,
                                                           const Tensor& images,
                                                           const LabelStore& store);

std::vector<std::uint8_t> serialize_store(const LabelStore& store);
LabelStore deserialize_store(std::span<const std::uint8_t> bytes,
                             std::optional<LabelMode> expect = std::nullopt);
void write_store(const std::filesystem::path& path, const LabelStore& store);
LabelStore read_store(const std::filesystem::path& path,
                      std::optional<LabelMode> expect = std::nullopt);

}  // namespace nrrdd
