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

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "nrrdd/binio.hpp"
#include "nrrdd/train.hpp"
#include "support.hpp"

using namespace nrrdd;
using nrrdd::testing::random_tensor;
using nrrdd::testing::rel_err;
using nrrdd::testing::tiny_model;

namespace {

struct ConstLoss : TraceLoss {
  double value(const ForwardTrace&) const override { return 3.0; }
  TraceGrad gradient(const ForwardTrace& t) const override {
    return {Tensor(t.batch(), t.classes(), 1, 1), {}};
  }
};

// Cross-entropy on class `y` plus a quadratic pull of every batch mean and
// variance towards fixed targets, scaled by `scale`.
struct MixedLoss : TraceLoss {
  int y = 0;
  double scale = 1.0;
  double value(const ForwardTrace& t) const override {
    double v = 0.0;
    for (int i = 0; i < t.batch(); ++i) v -= std::log(t.prob(i, y));
    for (const auto& s : t.batch_bn)
      for (std::size_t c = 0; c < s.mean.size(); ++c)
        v += 0.5 * (s.mean[c] - 0.1) * (s.mean[c] - 0.1) + 0.5 * (s.var[c] - 1.0) * (s.var[c] - 1.0);
    return scale * v;
  }
  TraceGrad gradient(const ForwardTrace& t) const override {
    TraceGrad g;
    g.d_logits = Tensor(t.batch(), t.classes(), 1, 1);
    for (int i = 0; i < t.batch(); ++i)
      for (int k = 0; k < t.classes(); ++k)
        g.d_logits.at(i, k, 0, 0) = scale * (t.prob(i, k) - (k == y ? 1.0 : 0.0));
    for (const auto& s : t.batch_bn) {
      BnStats d;
      for (std::size_t c = 0; c < s.mean.size(); ++c) {
        d.mean.push_back(scale * (s.mean[c] - 0.1));
        d.var.push_back(scale * (s.var[c] - 1.0));
      }
      g.d_bn.push_back(d);
    }
    return g;
  }
};

}  // namespace

TEST_SUITE("model_core") {
  TEST_CASE("forward is deterministic and probabilities normalise") {
    auto m = tiny_model(1);
    Rng rng(5);
    Tensor x = random_tensor(3, 3, 8, 8, rng);
    auto a = forward(m, x);
    auto b = forward(m, x);
    CHECK(a.logits == b.logits);
    CHECK(a.features == b.features);
    Tensor zero(1, 3, 8, 8);
    auto z = forward(m, zero);
    double s = 0.0;
    for (int k = 0; k < z.classes(); ++k) {
      CHECK(z.prob(0, k) >= 0.0);
      CHECK(z.prob(0, k) <= 1.0);
      s += z.prob(0, k);
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
  }

  TEST_CASE("eval forward is batch-size invariant") {
    for (const char* arch : {"convnet3", "resnet18"}) {
      auto m = tiny_model(2, 4, 8, 4, arch);
      Rng rng(6);
      Tensor x = random_tensor(2, 3, 8, 8, rng);
      auto both = forward(m, x);
      for (int i = 0; i < 2; ++i) {
        auto one = forward(m, x.image(i));
        for (int k = 0; k < 4; ++k) CHECK(std::abs(one.logit(0, k) - both.logit(i, k)) < 1e-5);
      }
    }
  }

  TEST_CASE("feature map geometry follows the architecture") {
    auto c = tiny_model(3, 3, 16);
    auto fc = forward(c, Tensor(1, 3, 16, 16));
    CHECK(fc.features.c() == 4);
    CHECK(fc.features.h() == 4);
    auto r = tiny_model(3, 3, 16, 4, "resnet18");
    auto fr = forward(r, Tensor(1, 3, 16, 16));
    CHECK(fr.features.c() == 32);
    CHECK(fr.features.h() == 2);
    CHECK(fc.batch_bn.size() == 3);
    CHECK(r.classifier_w().n() == 3);
  }

  TEST_CASE("shape mismatch is rejected") {
    auto m = tiny_model(1);
    CHECK_THROWS_AS(forward(m, Tensor(1, 3, 9, 8)), Error);
  }

  TEST_CASE("confidence is the max probability") {
    auto m = tiny_model(4);
    Rng rng(1);
    Tensor x = random_tensor(1, 3, 8, 8, rng);
    auto t = forward(m, x);
    double mx = 0.0;
    for (int k = 0; k < t.classes(); ++k) mx = std::max(mx, t.prob(0, k));
    CHECK(confidence(m, x) == mx);
  }

  TEST_CASE("softmax special cases") {
    Tensor l(1, 3, 1, 1);
    auto p = softmax(l);
    CHECK(std::abs(p[0] - 1.0 / 3) < 1e-15);
    Tensor big(1, 10, 1, 1);
    big[3] = 800.0;
    auto q = softmax(big);
    CHECK(q[3] == 1.0);
  }

  TEST_CASE("input gradient: constant loss gives zero gradient") {
    auto m = tiny_model(5);
    Rng rng(2);
    auto g = input_gradient(m, random_tensor(2, 3, 8, 8, rng), ConstLoss{});
    for (double v : g.grad.vec()) CHECK(v == 0.0);
  }

  TEST_CASE("input gradient is linear in the loss") {
    auto m = tiny_model(6);
    Rng rng(3);
    Tensor x = random_tensor(2, 3, 8, 8, rng);
    MixedLoss one, two;
    two.scale = 2.0;
    auto g1 = input_gradient(m, x, one);
    auto g2 = input_gradient(m, x, two);
    for (std::size_t i = 0; i < g1.grad.size(); ++i)
      CHECK(std::abs(g2.grad[i] - 2.0 * g1.grad[i]) < 1e-6);
  }

  TEST_CASE("input gradient matches central finite differences") {
    for (const char* arch : {"convnet3", "resnet18"}) {
      auto m = tiny_model(7, 3, 8, 4, arch);
      Rng rng(11);
      Tensor x = random_tensor(3, 3, 8, 8, rng);
      MixedLoss loss;
      loss.y = 1;
      auto g = input_gradient(m, x, loss);
      for (int probe = 0; probe < 8; ++probe) {
        const std::size_t j = uniform_index(rng, x.size());
        Tensor xp = x, xm = x;
        xp[j] += 1e-3;
        xm[j] -= 1e-3;
        const double fd = (loss.value(forward(m, xp)) - loss.value(forward(m, xm))) / 2e-3;
        CHECK(rel_err(fd, g.grad[j]) < 1e-3);
      }
    }
  }

  TEST_CASE("snapshot round trip is bit exact") {
    auto m = tiny_model(8, 5, 8, 4, "resnet18");
    m.meta.test_accuracy = 0.25;
    m.meta.note = "x";
    m.norm = {{0.5, 0.4, 0.3}, {0.2, 0.25, 0.3}};
    auto bytes = m.serialize();
    auto back = ModelSnapshot::deserialize(bytes);
    CHECK(back.serialize() == bytes);
    Rng rng(4);
    Tensor x = random_tensor(2, 3, 8, 8, rng);
    CHECK(forward(m, x).logits == forward(back, x).logits);
    CHECK(back.meta.test_accuracy == 0.25);
    CHECK(back.norm.std[1] == 0.25);
  }

  TEST_CASE("corrupt or truncated snapshots are rejected") {
    auto bytes = tiny_model(9).serialize();
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    CHECK_THROWS_AS(ModelSnapshot::deserialize(cut), Error);
    auto flip = bytes;
    flip[flip.size() / 2] ^= 0x40;
    try {
      ModelSnapshot::deserialize(flip);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCorrupt);
    }
  }

  TEST_CASE("running variances start non-negative") {
    auto m = ModelSnapshot::create({}, 0);
    CHECK(m.has_batchnorm());
    for (const auto& bn : m.bn_stats())
      for (double v : bn.var) CHECK(v >= 0.0);
  }

  TEST_CASE("unknown architecture is rejected") {
    ArchSpec a;
    a.arch_id = "mlp";
    CHECK_THROWS_AS(ModelSnapshot::create(a, 0), Error);
  }
}

TEST_SUITE("training") {
  TEST_CASE("adam leaves parameters with zero gradient untouched") {
    Adam opt({0.5, 0.9, 1e-8, 0.0});
    std::vector<Tensor> p{Tensor(1, 4, 1, 1, 1.0)};
    std::vector<Tensor> g{Tensor(1, 4, 1, 1)};
    g[0][1] = 0.3;
    for (int i = 0; i < 5; ++i) opt.step(p, g, 0.1);
    CHECK(p[0][0] == 1.0);
    CHECK(p[0][2] == 1.0);
    CHECK(p[0][1] < 1.0);
  }

  TEST_CASE("first adam step moves by lr times sign") {
    Adam opt;
    std::vector<Tensor> p{Tensor(1, 2, 1, 1)};
    std::vector<Tensor> g{Tensor(1, 2, 1, 1)};
    g[0][0] = 5.0;
    g[0][1] = -0.01;
    opt.step(p, g, 0.1);
    CHECK(p[0][0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(p[0][1] == doctest::Approx(0.1).epsilon(1e-4));
  }

  TEST_CASE("cosine schedule with warmup") {
    CHECK(cosine_lr(1.0, 0, 100, 5) == doctest::Approx(0.2));
    CHECK(cosine_lr(1.0, 4, 100, 5) == doctest::Approx(1.0));
    CHECK(cosine_lr(1.0, 5, 100, 5) == doctest::Approx(1.0));
    CHECK(cosine_lr(1.0, 100, 100, 5) == doctest::Approx(0.0));
    CHECK(cosine_lr(1.0, 52, 100, 5) == doctest::Approx(0.5).epsilon(0.05));
  }

  TEST_CASE("teacher training errors") {
    LabeledSet empty;
    CHECK_THROWS_AS(train_teacher(empty, nullptr, {}, {}, 0), Error);
    LabeledSet bad;
    bad.images = Tensor(2, 3, 8, 8);
    bad.labels = {0, 3};
    bad.num_classes = 2;
    CHECK_THROWS_AS(train_teacher(bad, nullptr, {}, {}, 0), Error);
  }

  TEST_CASE("single class dataset reaches full train accuracy") {
    Rng rng(1);
    LabeledSet s;
    s.images = random_tensor(6, 3, 8, 8, rng);
    s.labels.assign(6, 0);
    s.num_classes = 1;
    TeacherConfig cfg;
    cfg.width = 4;
    cfg.epochs = 1;
    auto m = train_teacher(s, nullptr, cfg, {}, 0);
    CHECK(m.meta.train_accuracy == 1.0);
  }

  TEST_CASE("teacher training is deterministic and learns a separable task") {
    Rng rng(2);
    LabeledSet s;
    s.num_classes = 2;
    s.images = Tensor(40, 3, 8, 8);
    for (int i = 0; i < 40; ++i) {
      const int y = i % 2;
      s.labels.push_back(y);
      for (int c = 0; c < 3; ++c)
        for (int yy = 0; yy < 8; ++yy)
          for (int xx = 0; xx < 8; ++xx)
            s.images.at(i, c, yy, xx) = 0.3 * normal(rng) + ((xx < 4) == (y == 0) ? 1.0 : -1.0);
    }
    TeacherConfig cfg;
    cfg.width = 4;
    cfg.epochs = 8;
    cfg.batch = 10;
    cfg.lr = 1e-2;
    cfg.augment = false;
    auto a = train_teacher(s, &s, cfg, {}, 3);
    auto b = train_teacher(s, &s, cfg, {}, 3);
    CHECK(a.serialize() == b.serialize());
    CHECK(a.meta.test_accuracy > 0.9);
    CHECK(evaluate(a, s) == a.meta.test_accuracy);
  }

  TEST_CASE("evaluate matches a per-sample loop") {
    auto m = tiny_model(10, 4);
    Rng rng(3);
    LabeledSet s;
    s.num_classes = 4;
    s.images = random_tensor(30, 3, 8, 8, rng);
    for (int i = 0; i < 30; ++i) s.labels.push_back(i % 4);
    int correct = 0;
    for (int i = 0; i < 30; ++i) {
      auto t = forward(m, s.images.image(i));
      int best = 0;
      for (int k = 1; k < 4; ++k)
        if (t.logit(0, k) > t.logit(0, best)) best = k;
      correct += best == s.labels[i];
    }
    CHECK(evaluate(m, s) == doctest::Approx(correct / 30.0));
    LabeledSet empty;
    CHECK_THROWS_AS(evaluate(m, empty), Error);
  }
}
