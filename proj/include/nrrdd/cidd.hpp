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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nrrdd/cam.hpp"
#include "nrrdd/mixer.hpp"
#include "nrrdd/model.hpp"
#include "nrrdd/train.hpp"

namespace nrrdd {

/// A region of a real training image together with its scores.
struct Patch {
  int source_id = 0;
  Box box;
  double cam_mass = 0.0;
  double confidence = 0.0;
  int class_id = 0;
};

struct PatchPool {
  std::vector<std::vector<Patch>> per_class;
};

inline constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

/// One synthetic image with everything needed to audit and relabel it.
struct SyntheticRecord {
  Tensor image;  // 1 x C x H x W, normalised space
  int class_id = 0;
  std::vector<Patch> provenance;  // grid cell i holds provenance[i], row-major
  std::optional<int> partner_idx;
  std::optional<AugmentSpec> aug_spec;
  std::optional<double> d_org, d_aug;
  bool refined = false;
  double initial_loss = kUnset;
  double final_loss = kUnset;
};

enum class Selection { kLowest, kHighest };

Selection parse_selection(const std::string& s);
std::string to_string(Selection s);

struct CiddConfig {
  int ipc = 10;
  int beta = 1;
  int k = 30;  // candidate crops per source image
  int t = 2;   // crops kept per source image
  double scale_lo = 0.25;
  double scale_hi = 1.0;
  double aspect_lo = 3.0 / 4.0;
  double aspect_hi = 4.0 / 3.0;
  Selection selection = Selection::kLowest;
  int images_per_class = 0;  // source images scanned per class, 0 = all
};

/// k random boxes with area fraction in [scale_lo, scale_hi] and aspect
/// ratio (width / height) in [aspect_lo, aspect_hi] where feasible.
std::vector<Box> crop_candidates(int height, int width, int k, double scale_lo, double scale_hi,
                                 std::uint64_t seed, double aspect_lo = 3.0 / 4.0,
                                 double aspect_hi = 4.0 / 3.0);

/// Sum of the map inside `box`.
double box_mass(const CamMap& cam, const Box& box);

/// The t boxes with the largest CAM mass, largest first; ties keep
/// generation order.
std::vector<Patch> select_top_cam(std::span<const Box> boxes, const CamMap& cam, int t);

/// The g patches of `class_id` with the lowest (or highest) confidence,
/// ordered by that confidence; ties keep pool order.
std::vector<Patch> select_hardest(const PatchPool& pool, int class_id, int g,
                                  Selection selection = Selection::kLowest);

/// Confidence of a patch after resizing it to the full input size.
double patch_confidence(const ModelSnapshot& model, const Tensor& images, const Patch& patch);

/// Places sqrt(beta) x sqrt(beta) resized patches on a grid, row-major in
/// the given order. Cell edges sit at floor(i * side / sqrt(beta)).
SyntheticRecord assemble(const Tensor& images, std::span<const Patch> patches, int class_id);

/// Cell rectangle i of an n x n grid over an h x w image.
Box grid_cell(int i, int n, int height, int width);

/// Builds the per-class patch pool (CAM-guided crops scored by confidence).
PatchPool build_pool(const ModelSnapshot& model, const LabeledSet& data, const CiddConfig& cfg,
                     std::uint64_t seed);

/// Full discovery: pool, hardest selection and assembly; ipc records per class.
std::vector<SyntheticRecord> run_cidd(const ModelSnapshot& model, const LabeledSet& data,
                                      const CiddConfig& cfg, std::uint64_t seed);

/// Baseline: ipc randomly chosen real images per class, unmodified.
std::vector<SyntheticRecord> random_real_init(const LabeledSet& data, int ipc, std::uint64_t seed);

/// Integer square root of beta or an error when beta is not a perfect square.
int grid_side(int beta);

}  // namespace nrrdd
