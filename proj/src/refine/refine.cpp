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

#include "nrrdd/refine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nrrdd/rng.hpp"
#include "nrrdd/train.hpp"

namespace nrrdd {

namespace {

constexpr std::uint64_t kPartnerTag = 0x9a27;
constexpr std::uint64_t kSpecTag = 0x5bec;
constexpr std::uint64_t kBatchTag = 0xba7c;

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void require_bn(const ModelSnapshot& model) {
  require(model.has_batchnorm(), ErrorCode::kUnsupported,
          "refinement needs a model with BatchNorm layers");
}

Tensor gather_images(const std::vector<SyntheticRecord>& recs, std::span<const int> idx) {
  Tensor out(static_cast<int>(idx.size()), recs[idx[0]].image.image_shape());
  for (std::size_t i = 0; i < idx.size(); ++i) out.set_image(static_cast<int>(i), recs[idx[i]].image);
  return out;
}

}  // namespace

double bn_loss(const ForwardTrace& trace, const ModelSnapshot& model) {
  require_bn(model);
  require(trace.batch() >= 2, ErrorCode::kInvalidArgument,
          "BN statistics loss needs a batch of at least 2");
  const auto& run = model.bn_stats();
  require(trace.batch_bn.size() == run.size(), ErrorCode::kShapeMismatch,
          "trace has the wrong number of BN layers");
  double s = 0.0;
  for (std::size_t l = 0; l < run.size(); ++l)
    s += l2(trace.batch_bn[l].mean, run[l].mean) + l2(trace.batch_bn[l].var, run[l].var);
  return s;
}

std::vector<BnStats> bn_loss_grad(const ForwardTrace& trace, const ModelSnapshot& model) {
  const auto& run = model.bn_stats();
  std::vector<BnStats> g(run.size());
  auto unit = [](std::span<const double> a, std::span<const double> b) {
    const double n = l2(a, b);
    std::vector<double> d(a.size(), 0.0);
    if (n > 0.0)
      for (std::size_t i = 0; i < a.size(); ++i) d[i] = (a[i] - b[i]) / n;
    return d;
  };
  for (std::size_t l = 0; l < run.size(); ++l) {
    g[l].mean = unit(trace.batch_bn[l].mean, run[l].mean);
    g[l].var = unit(trace.batch_bn[l].var, run[l].var);
  }
  return g;
}

double org_loss_value(double prob_y, double l_bn, double alpha_bn) {
  return -std::log(prob_y + kProbFloor) + alpha_bn * l_bn;
}

double lr_loss_value(std::span<const double> probs, int y_org, int y_aug, double r) {
  const double d_org = -std::log(probs[y_org] + kProbFloor);
  const double d_aug = -std::log(probs[y_aug] + kProbFloor);
  return std::max(0.0, d_org - r) + std::max(0.0, d_aug - r);
}

double org_loss(const ModelSnapshot& model, const Tensor& x_org, std::span<const int> y_org,
                double alpha_bn) {
  const ForwardTrace t = forward(model, x_org);
  double ce = 0.0;
  for (int i = 0; i < t.batch(); ++i) ce -= std::log(t.prob(i, y_org[i]) + kProbFloor);
  ce /= t.batch();
  return alpha_bn == 0.0 ? ce : ce + alpha_bn * bn_loss(t, model);
}

double lr_loss(const ModelSnapshot& model, const Tensor& x_mix, std::span<const int> y_org,
               std::span<const int> y_aug, double r) {
  const ForwardTrace t = forward(model, x_mix);
  double s = 0.0;
  for (int i = 0; i < t.batch(); ++i)
    s += lr_loss_value(std::span<const double>(t.probs.data() + static_cast<std::size_t>(i) * t.classes(),
                                               t.classes()),
                       y_org[i], y_aug[i], r);
  return s / t.batch();
}

Tensor masked_step(const Tensor& x, const MaskMap& mask, const Tensor& step) {
  require(x.same_shape(step), ErrorCode::kShapeMismatch, "masked_step: step shape differs");
  require(mask.values.height == x.h() && mask.values.width == x.w(), ErrorCode::kShapeMismatch,
          "masked_step: mask size differs from image");
  Tensor out = x;
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const std::size_t base = x.index(n, c, 0, 0);
      for (std::size_t p = 0; p < hw; ++p) {
        const double m = mask.values.values[p];
        if (m != 0.0) out[base + p] = x[base + p] - m * step[base + p];
      }
    }
  return out;
}

LcTerms lc_objective(const ModelSnapshot& model, const Tensor& x_org, std::span<const int> y_org,
                     const Tensor& x_aug, std::span<const int> y_aug,
                     std::span<const AugmentSpec> specs, const RefineConfig& cfg, bool with_grad) {
  require_bn(model);
  const int N = x_org.n();
  const int K = model.num_classes();
  require(static_cast<int>(y_org.size()) == N && static_cast<int>(y_aug.size()) == N &&
              static_cast<int>(specs.size()) == N && x_aug.same_shape(x_org),
          ErrorCode::kShapeMismatch, "refinement batch pieces disagree in size");
  LcTerms out;
  out.per_record.assign(N, 0.0);

  // Original images: cross-entropy and BN statistics.
  Pass pa;
  const ForwardTrace ta = forward_pass(model, x_org, pa);
  for (int i = 0; i < N; ++i) {
    const double ce = -std::log(ta.prob(i, y_org[i]) + kProbFloor);
    out.ce += ce / N;
    out.per_record[i] += ce;
  }
  if (cfg.alpha_bn != 0.0) out.bn = bn_loss(ta, model);
  for (double& v : out.per_record) v += cfg.alpha_bn * out.bn;
  if (with_grad) {
    TraceGrad g;
    g.d_logits = Tensor(N, K, 1, 1);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < K; ++k)
        g.d_logits.at(i, k, 0, 0) = (ta.prob(i, k) - (k == y_org[i] ? 1.0 : 0.0)) / N;
    if (cfg.alpha_bn != 0.0) {
      g.d_bn = bn_loss_grad(ta, model);
      for (auto& s : g.d_bn) {
        for (double& v : s.mean) v *= cfg.alpha_bn;
        for (double& v : s.var) v *= cfg.alpha_bn;
      }
    }
    out.grad = backward_pass(model, g, pa);
  }

  // Mixed images: label refinement hinge.
  if (cfg.alpha_lr != 0.0) {
    Tensor x_mix(N, x_org.image_shape());
    for (int i = 0; i < N; ++i)
      apply_into(specs[i], x_org.image_span(i), x_aug.image_span(i), x_mix.image_span(i),
                 x_org.image_shape());
    Pass pb;
    const ForwardTrace tb = forward_pass(model, x_mix, pb);
    TraceGrad g;
    if (with_grad) g.d_logits = Tensor(N, K, 1, 1);
    for (int i = 0; i < N; ++i) {
      double h = 0.0;
      for (int y : {y_org[i], y_aug[i]}) {
        const double p = tb.prob(i, y);
        const double d = -std::log(p + kProbFloor);
        if (d <= cfg.r) continue;
        h += d - cfg.r;
        if (!with_grad) continue;
        // d(-log(p + floor))/dz_k = -(p / (p + floor)) * (1[k = y] - p_k)
        const double s = cfg.alpha_lr / N * p / (p + kProbFloor);
        for (int k = 0; k < K; ++k)
          g.d_logits.at(i, k, 0, 0) += s * (tb.prob(i, k) - (k == y ? 1.0 : 0.0));
      }
      out.lr += h / N;
      out.per_record[i] += cfg.alpha_lr * h;
    }
    if (with_grad) {
      const Tensor d_mix = backward_pass(model, g, pb);
      for (int i = 0; i < N; ++i)
        add_org_grad(specs[i], d_mix.image_span(i), out.grad.image_span(i), x_org.image_shape());
    }
  }
  out.value = out.ce + cfg.alpha_bn * out.bn + cfg.alpha_lr * out.lr;
  return out;
}

PartnerDraw draw_partner(const std::vector<SyntheticRecord>& records, int i, std::uint64_t seed,
                         std::uint64_t iteration, MixMethod mix, bool same_class) {
  const int n = static_cast<int>(records.size());
  require(n >= 2, ErrorCode::kInvalidArgument, "partner sampling needs at least two records");
  Rng rng(derive_seed(seed, {kPartnerTag, iteration, static_cast<std::uint64_t>(i)}));
  PartnerDraw d;
  if (same_class) {
    std::vector<int> pool;
    for (int j = 0; j < n; ++j)
      if (j != i && records[j].class_id == records[i].class_id) pool.push_back(j);
    require(!pool.empty(), ErrorCode::kInvalidArgument,
            "same-class partner requested but class has a single record");
    d.partner = pool[uniform_index(rng, pool.size())];
  } else {
    d.partner = static_cast<int>(uniform_index(rng, n - 1));
    if (d.partner >= i) ++d.partner;
  }
  const ImageShape s = records[i].image.image_shape();
  d.spec = sample_spec(mix, derive_seed(seed, {kSpecTag, iteration, static_cast<std::uint64_t>(i)}),
                       s.height, s.width);
  return d;
}

std::vector<MaskMap> record_masks(const ModelSnapshot& model,
                                  const std::vector<SyntheticRecord>& records, double epsilon,
                                  bool full_mask) {
  std::vector<MaskMap> masks;
  if (records.empty()) return masks;
  const int H = records[0].image.h(), W = records[0].image.w();
  if (full_mask) {
    require(epsilon > 0.0 && epsilon < 1.0, ErrorCode::kInvalidArgument,
            "epsilon must lie in (0, 1)");
    MaskMap m;
    m.epsilon = epsilon;
    m.values = Plane(H, W, epsilon);
    masks.assign(records.size(), m);
    return masks;
  }
  std::vector<int> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> cls;
  for (const auto& r : records) cls.push_back(r.class_id);
  const auto cams = batch_cams(model, gather_images(records, idx), cls);
  for (const auto& c : cams) masks.push_back(non_critical_mask(c, epsilon));
  return masks;
}

void refine_dataset(const ModelSnapshot& model, std::vector<SyntheticRecord>& records,
                    const RefineConfig& cfg,
                    const std::function<void(const RefineProgress&)>& on_progress) {
  require_bn(model);
  require(cfg.iterations >= 0, ErrorCode::kConfig, "refinement iterations must be >= 0");
  require(cfg.batch >= 2, ErrorCode::kConfig, "refinement batch must be >= 2");
  require(cfg.optimizer == "adam" || cfg.optimizer == "sgd", ErrorCode::kConfig,
          "refine optimizer must be adam or sgd");
  const int n = static_cast<int>(records.size());
  if (n == 0) return;
  require(n >= 2, ErrorCode::kInvalidArgument, "refinement needs at least two records");
  for (const auto& r : records)
    require(r.image.image_shape() == model.input_shape(), ErrorCode::kShapeMismatch,
            "record image does not match the model input");

  const auto masks = record_masks(model, records, cfg.epsilon, cfg.full_mask);
  const ImageShape shape = model.input_shape();

  // Fixed batches from a seeded permutation; a trailing singleton joins the
  // previous batch so every batch has BN variance.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng brng(derive_seed(cfg.seed, {kBatchTag}));
  shuffle(order.begin(), order.end(), brng);
  std::vector<std::vector<int>> batches;
  for (int s = 0; s < n; s += cfg.batch)
    batches.emplace_back(order.begin() + s, order.begin() + std::min(n, s + cfg.batch));
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }

  std::vector<Adam> opts(batches.size(), Adam({cfg.beta1, cfg.beta2, 1e-8, 0.0}));
  std::vector<Tensor> initial;
  for (const auto& r : records) initial.push_back(r.image);

  auto batch_terms = [&](const std::vector<int>& b, const std::vector<Tensor>& partner_src,
                         const std::vector<PartnerDraw>& draws, bool with_grad,
                         const std::vector<Tensor>* own) {
    const int m = static_cast<int>(b.size());
    Tensor xo(m, shape), xa(m, shape);
    std::vector<int> yo(m), ya(m);
    std::vector<AugmentSpec> specs(m);
    for (int j = 0; j < m; ++j) {
      const int i = b[j];
      xo.set_image(j, own ? (*own)[i] : records[i].image);
      xa.set_image(j, partner_src[draws[i].partner]);
      yo[j] = records[i].class_id;
      ya[j] = records[draws[i].partner].class_id;
      specs[j] = draws[i].spec;
    }
    return std::pair{lc_objective(model, xo, yo, xa, ya, specs, cfg, with_grad), xo};
  };

  std::vector<PartnerDraw> draws(n);
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<Tensor> state;
    state.reserve(n);
    for (const auto& r : records) state.push_back(r.image);
    for (int i = 0; i < n; ++i)
      draws[i] = draw_partner(records, i, cfg.seed, it, cfg.mix, cfg.same_class_partner);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& b = batches[bi];
      auto [terms, xo] = batch_terms(b, state, draws, true, nullptr);
      loss_sum += terms.value * static_cast<double>(b.size());
      Tensor& g = terms.grad;
      const std::size_t hw = shape.plane();
      for (std::size_t j = 0; j < b.size(); ++j) {
        const auto& mv = masks[b[j]].values.values;
        for (int c = 0; c < shape.channels; ++c) {
          double* gp = g.data() + g.index(static_cast<int>(j), c, 0, 0);
          for (std::size_t p = 0; p < hw; ++p) gp[p] *= mv[p];
        }
      }
      if (cfg.optimizer == "adam") {
        std::vector<Tensor> params{std::move(xo)};
        std::vector<Tensor> grads{std::move(g)};
        opts[bi].step(params, grads, cfg.lr);
        xo = std::move(params[0]);
      } else {
        for (std::size_t k = 0; k < xo.size(); ++k) xo[k] -= cfg.lr * g[k];
      }
      for (std::size_t j = 0; j < b.size(); ++j) {
        SyntheticRecord& rec = records[b[j]];
        const auto& mv = masks[b[j]].values.values;
        for (int c = 0; c < shape.channels; ++c) {
          const double lo = model.norm.mean.empty() ? -1e300 : model.norm.lo(c);
          const double hi = model.norm.mean.empty() ? 1e300 : model.norm.hi(c);
          const double* src = xo.data() + xo.index(static_cast<int>(j), c, 0, 0);
          double* dst = rec.image.data() + rec.image.index(0, c, 0, 0);
          for (std::size_t p = 0; p < hw; ++p)
            if (mv[p] != 0.0) dst[p] = std::clamp(src[p], lo, hi);
        }
      }
    }
    if (on_progress) on_progress({it, loss_sum / n});
  }

  // Retained partner: the last iteration's draw (or a fresh one when I = 0).
  if (cfg.iterations == 0)
    for (int i = 0; i < n; ++i)
      draws[i] = draw_partner(records, i, cfg.seed, 0, cfg.mix, cfg.same_class_partner);

  std::vector<Tensor> final_state;
  for (const auto& r : records) final_state.push_back(r.image);
  for (const auto& b : batches) {
    auto [before, unused0] = batch_terms(b, initial, draws, false, &initial);
    auto [after, unused1] = batch_terms(b, final_state, draws, false, nullptr);
    for (std::size_t j = 0; j < b.size(); ++j) {
      records[b[j]].initial_loss = before.per_record[j];
      records[b[j]].final_loss = after.per_record[j];
    }
  }
  for (int i = 0; i < n; ++i) {
    records[i].partner_idx = draws[i].partner;
    records[i].aug_spec = draws[i].spec;
    records[i].refined = true;
    records[i].d_org.reset();
    records[i].d_aug.reset();
  }
}

}  // namespace nrrdd
