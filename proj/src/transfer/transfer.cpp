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

#include "nrrdd/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nrrdd/cidd.hpp"
#include "nrrdd/imageops.hpp"

namespace nrrdd {

namespace {

std::vector<double> log_softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] - lse;
  return out;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

// Gradient of -log(q_y + floor) w.r.t. the logits, added with weight w.
void add_distance_grad(std::vector<double>& g, std::span<const double> q, int y, double w) {
  const double s = w * q[y] / (q[y] + kProbFloor);
  for (std::size_t k = 0; k < q.size(); ++k) g[k] += s * (q[k] - (static_cast<int>(k) == y ? 1.0 : 0.0));
}

// Target distribution over classes for the baseline modes.
std::vector<double> baseline_target(LabelMode mode, const LabelRecord& rec, std::size_t K) {
  std::vector<double> t(K, 0.0);
  switch (mode) {
    case LabelMode::kSl:
      require(rec.probs.size() == K, ErrorCode::kModeMismatch, "SL record without a soft label");
      for (std::size_t k = 0; k < K; ++k) t[k] = rec.probs[k];
      break;
    case LabelMode::kOh:
      t[rec.y_org] = 1.0;
      break;
    case LabelMode::kCl: {
      require(rec.probs.size() == 2, ErrorCode::kModeMismatch, "CL record needs two entries");
      const double a = rec.probs[0], b = rec.probs[1];
      if (a + b > 0.0) {
        t[rec.y_org] += a / (a + b);
        t[rec.y_aug] += b / (a + b);
      } else {
        t[rec.y_org] += 0.5;
        t[rec.y_aug] += 0.5;
      }
      break;
    }
    case LabelMode::kDbr:
      fail(ErrorCode::kModeMismatch, "DBR records have no baseline target");
  }
  return t;
}

}  // namespace

std::pair<double, double> student_distances(std::span<const double> logits, int y_org, int y_aug) {
  const int K = static_cast<int>(logits.size());
  require(y_org >= 0 && y_org < K && y_aug >= 0 && y_aug < K, ErrorCode::kInvalidArgument,
          "class id out of range for the logits");
  const auto ls = log_softmax(logits);
  return {-std::log(std::exp(ls[y_org]) + kProbFloor), -std::log(std::exp(ls[y_aug]) + kProbFloor)};
}

DbrTerms dbr_objective(std::pair<double, double> ds, std::pair<double, double> dt, double alpha_dbr,
                       double r) {
  DbrTerms t;
  t.sce = std::max(0.0, ds.first - r) + std::max(0.0, ds.second - r);
  t.dbr = std::abs(ds.first - dt.first) + std::abs(ds.second - dt.second);
  t.total = t.sce + alpha_dbr * t.dbr;
  return t;
}

double baseline_objective(LabelMode mode, std::span<const double> logits, const LabelRecord& rec) {
  const auto ls = log_softmax(logits);
  const auto t = baseline_target(mode, rec, logits.size());
  double v = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] <= 0.0) continue;
    v -= t[k] * ls[k];
    if (mode == LabelMode::kSl) v += t[k] * std::log(t[k]);
  }
  return v;
}

RecordLoss record_loss(LabelMode mode, std::span<const double> logits, const LabelRecord& rec,
                       const TransferConfig& cfg) {
  const std::size_t K = logits.size();
  RecordLoss out;
  out.d_logits.assign(K, 0.0);
  const auto ls = log_softmax(logits);
  std::vector<double> q(K);
  for (std::size_t k = 0; k < K; ++k) q[k] = std::exp(ls[k]);
  if (mode == LabelMode::kDbr) {
    const auto ds = student_distances(logits, rec.y_org, rec.y_aug);
    const std::pair<double, double> dt{rec.d_org, rec.d_aug};
    const DbrTerms t = dbr_objective(ds, dt, cfg.alpha_dbr, cfg.r);
    out.value = t.total;
    out.sce = t.sce;
    out.dbr = t.dbr;
    const double w_org = (ds.first > cfg.r ? 1.0 : 0.0) + cfg.alpha_dbr * sign(ds.first - dt.first);
    const double w_aug = (ds.second > cfg.r ? 1.0 : 0.0) + cfg.alpha_dbr * sign(ds.second - dt.second);
    add_distance_grad(out.d_logits, q, rec.y_org, w_org);
    add_distance_grad(out.d_logits, q, rec.y_aug, w_aug);
    return out;
  }
  const auto t = baseline_target(mode, rec, K);
  double mass = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    mass += t[k];
    if (t[k] > 0.0) {
      out.value -= t[k] * ls[k];
      if (mode == LabelMode::kSl) out.value += t[k] * std::log(t[k]);
    }
  }
  for (std::size_t k = 0; k < K; ++k) out.d_logits[k] = mass * q[k] - t[k];
  return out;
}

double mean_dbr_gap(const ModelSnapshot& student, const Tensor& images, const LabelStore& store) {
  require(store.mode == LabelMode::kDbr, ErrorCode::kModeMismatch, "DBR store required");
  require(!store.records.empty(), ErrorCode::kInvalidArgument, "empty store");
  constexpr int kChunk = 100;
  const int total = static_cast<int>(store.records.size());
  const int K = student.num_classes();
  double sum = 0.0;
  for (int s = 0; s < total; s += kChunk) {
    const int m = std::min(kChunk, total - s);
    Tensor batch(m, images.image_shape());
    for (int j = 0; j < m; ++j) batch.set_image(j, reconstruct_mix(images, store.records[s + j]));
    const ForwardTrace t = forward(student, batch);
    for (int j = 0; j < m; ++j) {
      const auto& rec = store.records[s + j];
      const auto ds = student_distances(
          {t.logits.data() + static_cast<std::size_t>(j) * K, static_cast<std::size_t>(K)},
          rec.y_org, rec.y_aug);
      sum += std::abs(ds.first - rec.d_org) + std::abs(ds.second - rec.d_aug);
    }
  }
  return sum / total;
}

Tensor extra_augment(const Tensor& img, Rng& rng) {
  const Box b = crop_candidates(img.h(), img.w(), 1, 0.5, 1.0, rng())[0];
  Tensor out = resize_bilinear(crop(img, 0, b), img.h(), img.w());
  return uniform01(rng) < 0.5 ? hflip(out) : out;
}

double recover_rate(double dbr, double one_hot, double soft_label) {
  const double den = soft_label - one_hot;
  if (den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (dbr - one_hot) / den;
}

ModelSnapshot train_student(const LabelStore& store, const Tensor& images, const TransferConfig& cfg,
                            const Normalization& norm, const LabeledSet* test,
                            const ModelSnapshot* init,
                            const std::function<void(const TransferEpoch&)>& on_epoch) {
  require(!store.records.empty(), ErrorCode::kInvalidArgument, "label store is empty");
  require(cfg.epochs >= 0 && cfg.batch >= 2, ErrorCode::kConfig,
          "transfer needs epochs >= 0 and batch >= 2");
  require(cfg.schedule == "cosine" || cfg.schedule == "constant", ErrorCode::kConfig,
          "transfer schedule must be cosine or constant");
  const int n_img = images.n();
  for (const auto& rec : store.records) {
    require(rec.org_idx < static_cast<std::uint32_t>(n_img) &&
                (store.mode == LabelMode::kOh || rec.aug_idx < static_cast<std::uint32_t>(n_img)),
            ErrorCode::kInvalidArgument, "label record points past the synthetic set");
    require(rec.y_org >= 0 && static_cast<std::uint32_t>(rec.y_org) < store.num_classes,
            ErrorCode::kInvalidArgument, "label record class out of range");
  }

  ModelSnapshot student;
  if (init) {
    student = *init;
    require(student.num_classes() == static_cast<int>(store.num_classes), ErrorCode::kShapeMismatch,
            "initial student has the wrong class count");
  } else {
    ArchSpec arch;
    arch.arch_id = cfg.arch_id;
    arch.width = cfg.width;
    arch.num_classes = static_cast<int>(store.num_classes);
    arch.input = images.image_shape();
    student = ModelSnapshot::create(arch, derive_seed(cfg.seed, {0x57d}), norm);
  }
  if (cfg.epochs == 0) return student;

  std::vector<bool> decay;
  for (const ParamInfo& p : student.graph().params()) decay.push_back(p.decay);
  Adam opt({0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(derive_seed(cfg.seed, {0x7a5f}));
  const int n = static_cast<int>(store.records.size());
  const int K = static_cast<int>(store.num_classes);
  const long steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total = steps_per_epoch * cfg.epochs;
  const long warmup = steps_per_epoch * cfg.warmup_epochs;
  const bool augment = store.mode == LabelMode::kDbr ? cfg.extra_aug_dbr : cfg.extra_aug;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    TransferEpoch em;
    em.epoch = epoch;
    for (int start = 0; start < n; start += cfg.batch) {
      int bs = std::min(cfg.batch, n - start);
      if (bs < 2) continue;  // BN needs two samples
      Tensor batch(bs, images.image_shape());
      for (int j = 0; j < bs; ++j) {
        const LabelRecord& rec = store.records[order[start + j]];
        Tensor x = store.mode == LabelMode::kOh ? images.image(static_cast<int>(rec.org_idx))
                                                : reconstruct_mix(images, rec);
        if (augment) x = extra_augment(x, rng);
        batch.set_image(j, x);
      }
      Pass pass;
      pass.train = true;
      pass.param_grads = true;
      const ForwardTrace t = forward_pass(student, batch, pass);
      TraceGrad g;
      g.d_logits = Tensor(bs, K, 1, 1);
      for (int j = 0; j < bs; ++j) {
        const LabelRecord& rec = store.records[order[start + j]];
        const RecordLoss rl =
            record_loss(store.mode, {t.logits.data() + static_cast<std::size_t>(j) * K,
                                     static_cast<std::size_t>(K)},
                        rec, cfg);
        em.loss += rl.value / n;
        em.sce += rl.sce / n;
        em.dbr += rl.dbr / n;
        for (int k = 0; k < K; ++k) g.d_logits.at(j, k, 0, 0) = rl.d_logits[k] / bs;
      }
      backward_pass(student, g, pass);
      update_running_stats(student, pass);
      em.lr = cfg.schedule == "cosine" ? cosine_lr(cfg.lr, step, total, warmup) : cfg.lr;
      ++step;
      opt.step(student.state().params, pass.grads, em.lr, decay);
    }
    const bool last = epoch + 1 == cfg.epochs;
    if (test && (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)))
      em.test_accuracy = evaluate(student, *test);
    if (on_epoch) on_epoch(em);
  }
  student.meta.seed = cfg.seed;
  student.meta.epochs = cfg.epochs;
  if (test) student.meta.test_accuracy = evaluate(student, *test);
  return student;
}

}  // namespace nrrdd
