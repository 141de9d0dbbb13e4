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

#include "nrrdd/model.hpp"
#include "nrrdd/rng.hpp"

namespace nrrdd {

/// -log(p + kProbFloor); the shared convention for every CE "distance".
inline constexpr double kProbFloor = 1e-12;

/// Normalised images with integer labels in [0, num_classes).
struct LabeledSet {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

/// Adam with optional decoupled weight decay (AdamW when weight_decay > 0).
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam() = default;
  explicit Adam(Config cfg) : cfg_(cfg) {}

  /// One update. `decay[i]` selects which tensors receive weight decay
  /// (all when empty). Gradient entries that are exactly zero and have never
  /// been non-zero leave their parameter untouched.
  void step(std::span<Tensor> params, std::span<const Tensor> grads, double lr,
            const std::vector<bool>& decay = {});

  long steps() const { return t_; }

 private:
  Config cfg_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

/// Linear warm-up followed by cosine decay to zero.
double cosine_lr(double base, long step, long total, long warmup);

struct TeacherConfig {
  std::string arch_id = "convnet3";
  int width = 32;
  int epochs = 30;
  int batch = 64;
  double lr = 2e-3;
  double weight_decay = 5e-4;
  int warmup_epochs = 1;
  bool augment = true;  // random flip + translation
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = -1.0;
  double lr = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains a classifier from scratch; deterministic given `seed`.
ModelSnapshot train_teacher(const LabeledSet& train, const LabeledSet* test,
                            const TeacherConfig& cfg, const Normalization& norm,
                            std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Top-1 accuracy in eval mode.
double evaluate(const ModelSnapshot& model, const LabeledSet& test);

/// Predicted class per image.
std::vector<int> predict(const ModelSnapshot& model, const Tensor& images);

/// Random horizontal flip and integer translation (zero fill) of image 0.
Tensor flip_translate(const Tensor& img, int max_shift, Rng& rng);

/// Validates labels and shapes; raises kInvalidArgument.
void check_labeled_set(const LabeledSet& set);

}  // namespace nrrdd
