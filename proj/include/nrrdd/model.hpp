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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nrrdd/common.hpp"
#include "nrrdd/tensor.hpp"

namespace nrrdd {

/// Architecture selector. Known ids: "convnet3" (three conv-BN-ReLU blocks),
/// "convnet3_nobn" (the same without BatchNorm) and "resnet18" (basic-block
/// residual net, 18 weight layers).
struct ArchSpec {
  std::string arch_id = "convnet3";
  int width = 32;
  int num_classes = 10;
  ImageShape input{3, 32, 32};

  bool operator==(const ArchSpec&) const = default;
};

/// Per-channel mean and variance of one BatchNorm layer.
struct BnStats {
  std::vector<double> mean;
  std::vector<double> var;
};

struct ParamInfo {
  std::string name;
  int n = 0, c = 0, h = 1, w = 1;
  int fan_in = 1;
  enum class Init { kKaiming, kUniformFanIn, kOnes, kZeros } init = Init::kZeros;
  bool decay = false;  // subject to weight decay
};

/// Mutable numeric state of a network: parameters and BN running statistics.
struct ModelState {
  std::vector<Tensor> params;
  std::vector<BnStats> running;
};

/// Scratch space for one forward/backward evaluation. Layers are stateless;
/// everything a pass needs lives here, so a snapshot can be shared by
/// concurrent callers as long as each uses its own Pass.
struct Pass {
  bool train = false;        // BN normalises with batch statistics
  bool param_grads = false;  // accumulate parameter gradients on backward
  std::vector<std::vector<Tensor>> cache;
  std::vector<BnStats> batch_bn;
  std::vector<BnStats> bn_grad;  // optional dL/d(batch mean, batch var)
  std::vector<Tensor> grads;
  Tensor features;
};

class Module;

/// Immutable layer graph shared between copies of a model.
class Graph {
 public:
  static std::shared_ptr<const Graph> build(const ArchSpec& arch);

  const ArchSpec& arch() const { return arch_; }
  const std::vector<ParamInfo>& params() const { return params_; }
  const std::vector<int>& bn_channels() const { return bn_channels_; }
  int slots() const { return slots_; }
  int feature_channels() const { return feature_channels_; }
  int head_weight() const { return head_w_; }
  int head_bias() const { return head_b_; }
  int head_slot() const { return head_slot_; }
  /// Spatial size of the final feature maps for the configured input.
  int feature_h() const { return feature_h_; }
  int feature_w() const { return feature_w_; }
  const Module& body() const { return *body_; }

  // Builder hooks used by layer constructors.
  int add_param(ParamInfo info);
  int add_bn(int channels);
  int add_slot() { return slots_++; }

 private:
  ArchSpec arch_;
  std::vector<ParamInfo> params_;
  std::vector<int> bn_channels_;
  int slots_ = 0;
  int feature_channels_ = 0;
  int feature_h_ = 0;
  int feature_w_ = 0;
  int head_w_ = -1;
  int head_b_ = -1;
  int head_slot_ = -1;
  std::shared_ptr<const Module> body_;
};

/// Per-channel input normalisation applied before images reach the model.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;

  double lo(int c) const { return (0.0 - mean[c]) / std[c]; }
  double hi(int c) const { return (1.0 - mean[c]) / std[c]; }
};

struct SnapshotMeta {
  std::uint64_t seed = 0;
  double test_accuracy = -1.0;  // -1 when not evaluated
  double train_accuracy = -1.0;
  int epochs = 0;
  std::string note;
};

/// Trained classifier: weights, BN running statistics, normalisation constants.
class ModelSnapshot {
 public:
  ModelSnapshot() = default;
  /// Fresh randomly initialised model.
  static ModelSnapshot create(const ArchSpec& arch, std::uint64_t seed,
                              Normalization norm = {});

  const ArchSpec& arch() const { return graph_->arch(); }
  const Graph& graph() const { return *graph_; }
  int num_classes() const { return arch().num_classes; }
  ImageShape input_shape() const { return arch().input; }
  bool has_batchnorm() const { return !graph_->bn_channels().empty(); }

  /// Final-layer class weights, K x F (stored as n=K, c=F).
  const Tensor& classifier_w() const { return state_.params[graph_->head_weight()]; }
  const std::vector<BnStats>& bn_stats() const { return state_.running; }

  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }

  Normalization norm;
  SnapshotMeta meta;

  std::vector<std::uint8_t> serialize() const;
  static ModelSnapshot deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static ModelSnapshot load(const std::filesystem::path& path);

 private:
  std::shared_ptr<const Graph> graph_;
  ModelState state_;
};

/// Everything a batch forward exposes: logits, softmax, final feature maps
/// and the per-BN-layer statistics of the batch itself.
struct ForwardTrace {
  Tensor logits;    // N x K
  Tensor probs;     // N x K
  Tensor features;  // N x F x hf x wf
  std::vector<BnStats> batch_bn;

  int batch() const { return logits.n(); }
  int classes() const { return logits.c(); }
  double prob(int i, int k) const { return probs.at(i, k, 0, 0); }
  double logit(int i, int k) const { return logits.at(i, k, 0, 0); }
};

/// Gradient of a scalar loss with respect to the parts of a trace.
struct TraceGrad {
  Tensor d_logits;               // N x K
  std::vector<BnStats> d_bn;     // empty, or one entry per BN layer
};

/// A differentiable scalar function of a ForwardTrace.
class TraceLoss {
 public:
  virtual ~TraceLoss() = default;
  virtual double value(const ForwardTrace& t) const = 0;
  virtual TraceGrad gradient(const ForwardTrace& t) const = 0;
};

/// Eval-mode forward (BN normalises with running statistics).
ForwardTrace forward(const ModelSnapshot& model, const Tensor& batch);

/// Highest softmax probability for image 0 of `image`.
double confidence(const ModelSnapshot& model, const Tensor& image);

struct InputGradient {
  double loss = 0.0;
  Tensor grad;  // same shape as the input batch
  ForwardTrace trace;
};

/// Exact reverse-mode gradient of `loss` w.r.t. the input pixels, eval mode.
InputGradient input_gradient(const ModelSnapshot& model, const Tensor& batch,
                             const TraceLoss& loss);

/// Low-level pass API used by training loops.
ForwardTrace forward_pass(const ModelSnapshot& model, const Tensor& batch, Pass& pass);
Tensor backward_pass(const ModelSnapshot& model, const TraceGrad& grad, Pass& pass);

/// Folds the batch statistics of a train-mode pass into the running stats.
void update_running_stats(ModelSnapshot& model, const Pass& pass,
                          double momentum = 0.1);

/// Row-wise softmax of an N x K tensor.
Tensor softmax(const Tensor& logits);

}  // namespace nrrdd
