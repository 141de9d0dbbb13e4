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

#include "nrrdd/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace nrrdd {

void Adam::step(std::span<Tensor> params, std::span<const Tensor> grads, double lr,
                const std::vector<bool>& decay) {
  require(params.size() == grads.size(), ErrorCode::kInternal, "adam: size mismatch");
  if (m_.empty()) {
    for (const Tensor& p : params) {
      m_.emplace_back(p.n(), p.c(), p.h(), p.w());
      v_.emplace_back(p.n(), p.c(), p.h(), p.w());
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    require(p.size() == g.size(), ErrorCode::kInternal, "adam: tensor size mismatch");
    const bool wd = cfg_.weight_decay > 0.0 && (decay.empty() || decay[i]);
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      if (wd) p[j] -= lr * cfg_.weight_decay * p[j];
      // m = v = 0 gives an exactly zero update.
      if (m[j] != 0.0) p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
    }
  }
}

double cosine_lr(double base, long step, long total, long warmup) {
  if (total <= 0) return base;
  if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const long span = std::max<long>(1, total - warmup);
  const double t = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return base * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
}

void check_labeled_set(const LabeledSet& set) {
  require(set.size() > 0, ErrorCode::kInvalidArgument, "dataset is empty");
  require(set.images.n() == set.size(), ErrorCode::kShapeMismatch,
          "image count does not match label count");
  require(set.num_classes >= 1, ErrorCode::kInvalidArgument, "num_classes must be >= 1");
  for (int y : set.labels)
    require(y >= 0 && y < set.num_classes, ErrorCode::kInvalidArgument,
            "label " + std::to_string(y) + " out of range [0, " +
                std::to_string(set.num_classes) + ")");
}

Tensor flip_translate(const Tensor& img, int max_shift, Rng& rng) {
  const bool flip = uniform01(rng) < 0.5;
  const int dy = max_shift > 0 ? static_cast<int>(uniform_index(rng, 2 * max_shift + 1)) - max_shift : 0;
  const int dx = max_shift > 0 ? static_cast<int>(uniform_index(rng, 2 * max_shift + 1)) - max_shift : 0;
  Tensor out(1, img.c(), img.h(), img.w());
  for (int c = 0; c < img.c(); ++c)
    for (int y = 0; y < img.h(); ++y)
      for (int x = 0; x < img.w(); ++x) {
        const int sy = y - dy;
        int sx = x - dx;
        if (sy < 0 || sy >= img.h() || sx < 0 || sx >= img.w()) continue;
        if (flip) sx = img.w() - 1 - sx;
        out.at(0, c, y, x) = img.at(0, c, sy, sx);
      }
  return out;
}

namespace {

Tensor gather(const Tensor& images, std::span<const int> idx) {
  Tensor out(static_cast<int>(idx.size()), images.image_shape());
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy(images.image_span(idx[i]).begin(), images.image_span(idx[i]).end(),
              out.image_span(static_cast<int>(i)).begin());
  return out;
}

}  // namespace

std::vector<int> predict(const ModelSnapshot& model, const Tensor& images) {
  std::vector<int> out;
  out.reserve(images.n());
  constexpr int kChunk = 200;
  for (int start = 0; start < images.n(); start += kChunk) {
    const int n = std::min(kChunk, images.n() - start);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const ForwardTrace t = forward(model, gather(images, idx));
    for (int i = 0; i < n; ++i) {
      int best = 0;
      for (int k = 1; k < t.classes(); ++k)
        if (t.logit(i, k) > t.logit(i, best)) best = k;
      out.push_back(best);
    }
  }
  return out;
}

double evaluate(const ModelSnapshot& model, const LabeledSet& test) {
  require(test.size() > 0, ErrorCode::kInvalidArgument, "evaluation set is empty");
  const auto pred = predict(model, test.images);
  int correct = 0;
  for (int i = 0; i < test.size(); ++i) correct += pred[i] == test.labels[i];
  return static_cast<double>(correct) / test.size();
}

ModelSnapshot train_teacher(const LabeledSet& train, const LabeledSet* test,
                            const TeacherConfig& cfg, const Normalization& norm,
                            std::uint64_t seed, const EpochCallback& on_epoch) {
  check_labeled_set(train);
  require(cfg.epochs >= 0 && cfg.batch >= 1, ErrorCode::kInvalidArgument,
          "teacher epochs must be >= 0 and batch >= 1");
  ArchSpec arch;
  arch.arch_id = cfg.arch_id;
  arch.width = cfg.width;
  arch.num_classes = train.num_classes;
  arch.input = train.images.image_shape();
  ModelSnapshot model = ModelSnapshot::create(arch, seed, norm);
  if (!model.has_batchnorm()) {
    model.meta.note = "warning: architecture has no BatchNorm layers; refinement will reject it";
    std::cerr << "nrrdd: " << model.meta.note << "\n";
  }

  std::vector<bool> decay;
  for (const ParamInfo& p : model.graph().params()) decay.push_back(p.decay);
  Adam opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(derive_seed(seed, {0x7eac}));
  const int n = train.size();
  const long steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total = steps_per_epoch * cfg.epochs;
  const long warmup = steps_per_epoch * cfg.warmup_epochs;
  const int max_shift = std::max(1, arch.input.height / 8);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int correct = 0;
    double lr = 0.0;
    for (int start = 0; start < n; start += cfg.batch) {
      const int bs = std::min(cfg.batch, n - start);
      // BN needs more than one value per channel in train mode.
      if (bs < 2 && n >= 2) continue;
      Tensor batch(bs, arch.input);
      for (int i = 0; i < bs; ++i) {
        const int src = order[start + i];
        Tensor img = train.images.image(src);
        if (cfg.augment) img = flip_translate(img, max_shift, rng);
        batch.set_image(i, img);
      }
      Pass pass;
      pass.train = true;
      pass.param_grads = true;
      const ForwardTrace t = forward_pass(model, batch, pass);
      TraceGrad g;
      g.d_logits = Tensor(bs, arch.num_classes, 1, 1);
      for (int i = 0; i < bs; ++i) {
        const int y = train.labels[order[start + i]];
        loss_sum += -std::log(t.prob(i, y) + kProbFloor);
        int best = 0;
        for (int k = 0; k < arch.num_classes; ++k) {
          g.d_logits.at(i, k, 0, 0) = (t.prob(i, k) - (k == y ? 1.0 : 0.0)) / bs;
          if (t.logit(i, k) > t.logit(i, best)) best = k;
        }
        correct += best == y;
      }
      backward_pass(model, g, pass);
      update_running_stats(model, pass);
      lr = cosine_lr(cfg.lr, step++, total, warmup);
      opt.step(model.state().params, pass.grads, lr, decay);
    }
    EpochMetrics em;
    em.epoch = epoch;
    em.loss = loss_sum / n;
    em.train_accuracy = static_cast<double>(correct) / n;
    em.lr = lr;
    if (test && (epoch + 1 == cfg.epochs)) em.test_accuracy = evaluate(model, *test);
    if (on_epoch) on_epoch(em);
  }

  model.meta.seed = seed;
  model.meta.epochs = cfg.epochs;
  model.meta.train_accuracy = evaluate(model, train);
  if (test) model.meta.test_accuracy = evaluate(model, *test);
  return model;
}

}  // namespace nrrdd
