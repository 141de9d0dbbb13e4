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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nrrdd/cam.hpp"
#include "nrrdd/cidd.hpp"
#include "nrrdd/mixer.hpp"
#include "nrrdd/model.hpp"

namespace nrrdd {

struct RefineConfig {
  int iterations = 2000;
  double lr = 0.05;
  double beta1 = 0.5;
  double beta2 = 0.9;
  int batch = 100;
  double alpha_bn = 10.0;
  double alpha_lr = 1.0;
  double r = 0.4;
  double epsilon = 0.5;
  MixMethod mix = MixMethod::kCutmix;
  bool same_class_partner = false;
  std::string optimizer = "adam";  // "adam" or "sgd"
  bool full_mask = false;          // mask = epsilon everywhere (whole-image inversion)
  std::uint64_t seed = 0;
};

/// Sum over BN layers of ||batch mean - running mean|| + ||batch var - running var||.
double bn_loss(const ForwardTrace& trace, const ModelSnapshot& model);

/// d bn_loss / d(batch mean, batch var) per layer.
std::vector<BnStats> bn_loss_grad(const ForwardTrace& trace, const ModelSnapshot& model);

/// -ln(p_y + floor) + alpha_bn * l_bn.
double org_loss_value(double prob_y, double l_bn, double alpha_bn);

/// Mean cross-entropy on y_org over the batch plus alpha_bn times bn_loss.
double org_loss(const ModelSnapshot& model, const Tensor& x_org, std::span<const int> y_org,
                double alpha_bn);

/// max(0, d_org - r) + max(0, d_aug - r) for one probability row.
double lr_loss_value(std::span<const double> probs, int y_org, int y_aug, double r);

/// Mean hinge sum over a batch of mixed images.
double lr_loss(const ModelSnapshot& model, const Tensor& x_mix, std::span<const int> y_org,
               std::span<const int> y_aug, double r);

/// x - mask * step, mask broadcast over channels; 1 x C x H x W tensors.
Tensor masked_step(const Tensor& x, const MaskMap& mask, const Tensor& step);

/// Value and input gradient of the refinement objective for one batch.
struct LcTerms {
  double value = 0.0;
  double ce = 0.0;
  double bn = 0.0;
  double lr = 0.0;
  std::vector<double> per_record;  // ce_i + alpha_bn * bn + alpha_lr * hinge_i
  Tensor grad;                     // d value / d x_org
};

LcTerms lc_objective(const ModelSnapshot& model, const Tensor& x_org, std::span<const int> y_org,
                     const Tensor& x_aug, std::span<const int> y_aug,
                     std::span<const AugmentSpec> specs, const RefineConfig& cfg, bool with_grad);

struct RefineProgress {
  int iteration = 0;
  double mean_loss = 0.0;
};

/// Masked refinement of every record in place. Masks come from the initial
/// images and stay fixed. Batches are fixed for the whole run.
void refine_dataset(const ModelSnapshot& model, std::vector<SyntheticRecord>& records,
                    const RefineConfig& cfg,
                    const std::function<void(const RefineProgress&)>& on_progress = {});

/// Partner index and spec for record i at step `iteration`.
struct PartnerDraw {
  int partner = 0;
  AugmentSpec spec;
};
PartnerDraw draw_partner(const std::vector<SyntheticRecord>& records, int i, std::uint64_t seed,
                         std::uint64_t iteration, MixMethod mix, bool same_class);

/// Non-critical mask of each record's current image.
std::vector<MaskMap> record_masks(const ModelSnapshot& model,
                                  const std::vector<SyntheticRecord>& records, double epsilon,
                                  bool full_mask = false);

}  // namespace nrrdd
