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

#include "doctest.h"
#include "nrrdd/mixer.hpp"
#include "support.hpp"

using namespace nrrdd;
using nrrdd::testing::random_tensor;

TEST_SUITE("mixer") {
  TEST_CASE("sampling is deterministic in the seed") {
    for (std::uint64_t s = 0; s < 50; ++s) {
      CHECK(sample_spec(MixMethod::kCutmix, s, 32, 32) == sample_spec(MixMethod::kCutmix, s, 32, 32));
      CHECK(sample_spec(MixMethod::kMixup, s, 32, 32) == sample_spec(MixMethod::kMixup, s, 32, 32));
    }
    CHECK(!(sample_spec(MixMethod::kCutmix, 1, 32, 32) == sample_spec(MixMethod::kCutmix, 2, 32, 32)));
  }

  TEST_CASE("lam mean is close to one half") {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 10000; ++s) sum += sample_spec(MixMethod::kMixup, s, 8, 8).lam;
    CHECK(sum / 10000 >= 0.48);
    CHECK(sum / 10000 <= 0.52);
  }

  TEST_CASE("forced lam of one gives an empty cutmix box") {
    auto s = make_spec(MixMethod::kCutmix, 1.0, 9, 32, 32);
    CHECK(s.box.empty());
    Rng rng(1);
    Tensor a = random_tensor(1, 3, 32, 32, rng), b = random_tensor(1, 3, 32, 32, rng);
    CHECK(apply(s, a, b) == a);
  }

  TEST_CASE("mixup endpoints and midpoint") {
    Rng rng(2);
    Tensor a = random_tensor(1, 3, 8, 8, rng), b = random_tensor(1, 3, 8, 8, rng);
    CHECK(apply(make_spec(MixMethod::kMixup, 1.0, 0, 8, 8), a, b) == a);
    Tensor zero(1, 3, 8, 8), two(1, 3, 8, 8, 2.0);
    auto m = apply(make_spec(MixMethod::kMixup, 0.5, 0, 8, 8), zero, two);
    for (double v : m.vec()) CHECK(v == 1.0);
  }

  TEST_CASE("cutmix quadrant matches a hand composite") {
    Rng rng(3);
    Tensor a = random_tensor(1, 3, 8, 8, rng), b = random_tensor(1, 3, 8, 8, rng);
    AugmentSpec s;
    s.method = MixMethod::kCutmix;
    s.lam = 0.75;
    s.box = {0, 0, 4, 4};
    auto m = apply(s, a, b);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          CHECK(m.at(0, c, y, x) == ((y < 4 && x < 4) ? b.at(0, c, y, x) : a.at(0, c, y, x)));
  }

  TEST_CASE("mixing an image with itself is the identity") {
    Rng rng(4);
    for (std::uint64_t s = 0; s < 100; ++s) {
      Tensor x = random_tensor(1, 3, 8, 8, rng);
      auto c = apply(sample_spec(MixMethod::kCutmix, s, 8, 8), x, x);
      CHECK(c == x);
      auto m = apply(sample_spec(MixMethod::kMixup, s, 8, 8), x, x);
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(m[i] - x[i]) < 1e-7);
    }
  }

  TEST_CASE("cutmix area tracks one minus lam") {
    for (std::uint64_t s = 0; s < 2000; ++s) {
      auto sp = sample_spec(MixMethod::kCutmix, s, 32, 24);
      CHECK(sp.box.inside(32, 24));
      const double side = std::sqrt(1.0 - sp.lam);
      CHECK(std::abs(sp.box.height - 32 * side) <= 1.0);
      CHECK(std::abs(sp.box.width - 24 * side) <= 1.0);
    }
  }

  TEST_CASE("gradient through the mix matches finite differences") {
    Rng rng(5);
    const ImageShape shape{2, 6, 6};
    for (auto method : {MixMethod::kMixup, MixMethod::kCutmix}) {
      auto spec = make_spec(method, 0.6, 11, 6, 6);
      Tensor a = random_tensor(1, 2, 6, 6, rng), b = random_tensor(1, 2, 6, 6, rng);
      Tensor wts = random_tensor(1, 2, 6, 6, rng);
      auto f = [&](const Tensor& org) {
        auto m = apply(spec, org, b);
        double s = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) s += wts[i] * m[i] * m[i];
        return s;
      };
      auto m = apply(spec, a, b);
      std::vector<double> dmix(m.size()), dorg(m.size(), 0.0);
      for (std::size_t i = 0; i < m.size(); ++i) dmix[i] = 2.0 * wts[i] * m[i];
      add_org_grad(spec, dmix, dorg, shape);
      for (std::size_t i = 0; i < a.size(); ++i) {
        Tensor p = a, q = a;
        p[i] += 1e-4;
        q[i] -= 1e-4;
        CHECK(std::abs((f(p) - f(q)) / 2e-4 - dorg[i]) < 1e-6);
      }
    }
  }

  TEST_CASE("24 byte encoding round trips") {
    for (std::uint64_t s = 0; s < 200; ++s) {
      auto sp = sample_spec(s % 2 ? MixMethod::kMixup : MixMethod::kCutmix, s * 7919, 32, 32);
      auto bytes = encode_spec(sp);
      CHECK(bytes.size() == 24);
      CHECK(decode_spec(bytes) == sp);
    }
    std::array<std::uint8_t, 24> bad{};
    bad[0] = 7;
    CHECK_THROWS_AS(decode_spec(bad), Error);
  }

  TEST_CASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(apply(AugmentSpec{}, Tensor(1, 3, 4, 4), Tensor(1, 3, 4, 5)), Error);
    CHECK_THROWS_AS(parse_mix_method("blend"), Error);
  }
}
