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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nrrdd/label_store.hpp"
#include "nrrdd/model.hpp"
#include "nrrdd/train.hpp"

namespace nrrdd {

struct TransferConfig {
  std::string arch_id = "convnet3";
  int width = 32;
  int epochs = 300;
  double lr = 1e-3;
  int batch = 100;
  double alpha_dbr = 1.0;
  double r = 0.4;
  double weight_decay = 0.01;
  int warmup_epochs = 5;
  std::string schedule = "cosine";  // "cosine" or "constant"
  bool extra_aug = false;           // random resized crop + flip for SL/CL/OH
  bool extra_aug_dbr = false;       // same for DBR, reusing the stored distances
  int eval_every = 0;               // test accuracy every n epochs, 0 = last only
  std::uint64_t seed = 0;
};

/// Student distances -ln(softmax(logits)[y] + floor) for y_org and y_aug.
std::pair<double, double> student_distances(std::span<const double> logits, int y_org, int y_aug);

struct DbrTerms {
  double sce = 0.0;  // hinge part
  double dbr = 0.0;  // distance-matching part
  double total = 0.0;
};

/// Hinge on the student distances plus alpha_dbr times the absolute gap to
/// the teacher distances.
DbrTerms dbr_objective(std::pair<double, double> d_student, std::pair<double, double> d_teacher,
                       double alpha_dbr, double r);

/// SL: KL(stored soft label || student). OH: cross-entropy on y_org.
/// CL: cross-entropy against the two stored entries renormalised to sum to 1.
double baseline_objective(LabelMode mode, std::span<const double> logits, const LabelRecord& rec);

/// Loss and gradient w.r.t. logits for one record under the store's mode.
struct RecordLoss {
  double value = 0.0;
  double sce = 0.0;
  double dbr = 0.0;
  std::vector<double> d_logits;
};
RecordLoss record_loss(LabelMode mode, std::span<const double> logits, const LabelRecord& rec,
                       const TransferConfig& cfg);

/// Mean distance-matching term of a model over a DBR store (eval mode).
double mean_dbr_gap(const ModelSnapshot& student, const Tensor& images, const LabelStore& store);

struct TransferEpoch {
  int epoch = 0;
  double loss = 0.0;
  double sce = 0.0;
  double dbr = 0.0;
  double lr = 0.0;
  double test_accuracy = -1.0;
};

/// Trains a student on the stored pairs; `images` are the synthetic images
/// the store indexes. With `init` the student starts from that snapshot.
ModelSnapshot train_student(const LabelStore& store, const Tensor& images, const TransferConfig& cfg,
                            const Normalization& norm, const LabeledSet* test,
                            const ModelSnapshot* init = nullptr,
                            const std::function<void(const TransferEpoch&)>& on_epoch = {});

/// (dbr - one_hot) / (soft_label - one_hot); NaN when the denominator is 0.
double recover_rate(double dbr, double one_hot, double soft_label);

/// Random resized crop (area 50-100%) and horizontal flip of one image.
Tensor extra_augment(const Tensor& img, Rng& rng);

}  // namespace nrrdd
