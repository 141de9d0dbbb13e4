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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "nrrdd/cidd.hpp"
#include "nrrdd/imageops.hpp"
#include "support.hpp"

using namespace nrrdd;
using nrrdd::testing::random_tensor;
using nrrdd::testing::tiny_model;

namespace {

LabeledSet toy_set(int per_class, int classes, int hw, std::uint64_t seed) {
  Rng rng(seed);
  LabeledSet s;
  s.num_classes = classes;
  s.images = random_tensor(per_class * classes, 3, hw, hw, rng);
  for (int i = 0; i < per_class * classes; ++i) s.labels.push_back(i % classes);
  return s;
}

Patch with_conf(int id, double c) {
  Patch p;
  p.source_id = id;
  p.confidence = c;
  return p;
}

}  // namespace

TEST_SUITE("cidd") {
  TEST_CASE("full-scale single crop is the whole image") {
    auto b = crop_candidates(32, 32, 1, 1.0, 1.0, 5);
    REQUIRE(b.size() == 1);
    CHECK(b[0] == Box{0, 0, 32, 32});
  }

  TEST_CASE("crops are deterministic and within bounds") {
    CHECK(crop_candidates(32, 32, 30, 0.25, 1.0, 9) == crop_candidates(32, 32, 30, 0.25, 1.0, 9));
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      for (const Box& b : crop_candidates(32, 32, 30, 0.25, 1.0, seed)) {
        CHECK(b.inside(32, 32));
        CHECK(b.height > 0);
        CHECK(b.width > 0);
        // Rounding each side by at most half a pixel.
        const double slack = 0.5 * (b.height + b.width) + 0.25;
        CHECK(b.area() >= 0.25 * 1024 - slack);
        CHECK(b.area() <= 1024);
        const double r = static_cast<double>(b.width) / b.height;
        CHECK(r >= 0.75 * (1.0 - 1.0 / b.height) - 1e-9);
        CHECK(r <= (4.0 / 3.0) * (1.0 + 1.0 / b.height) + 1e-9);
      }
    }
  }

  TEST_CASE("crop errors") {
    CHECK_THROWS_AS(crop_candidates(32, 32, 3, 0.5, 1.5, 0), Error);
    CHECK_THROWS_AS(crop_candidates(32, 32, 0, 0.5, 1.0, 0), Error);
  }

  TEST_CASE("top cam keeps every box when t = k") {
    CamMap cam;
    cam.normalized = true;
    cam.values = Plane(8, 8, 0.5);
    auto boxes = crop_candidates(8, 8, 5, 0.25, 1.0, 3);
    CHECK(select_top_cam(boxes, cam, 5).size() == 5);
    CHECK_THROWS_AS(select_top_cam(boxes, cam, 6), Error);
  }

  TEST_CASE("top cam finds the salient quadrant") {
    CamMap cam;
    cam.normalized = true;
    cam.values = Plane(8, 8);
    for (int y = 4; y < 8; ++y)
      for (int x = 0; x < 4; ++x) cam.values.at(y, x) = 1.0;
    std::vector<Box> q{{0, 0, 4, 4}, {0, 4, 4, 4}, {4, 0, 4, 4}, {4, 4, 4, 4}};
    auto top = select_top_cam(q, cam, 1);
    CHECK(top[0].box == Box{4, 0, 4, 4});
    CHECK(top[0].cam_mass == 16.0);
  }

  TEST_CASE("top cam matches a brute-force sort, ties by generation order") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      CamMap cam;
      cam.normalized = true;
      cam.values = Plane(16, 16);
      for (double& v : cam.values.values) v = std::floor(4 * uniform01(rng)) / 4;
      auto boxes = crop_candidates(16, 16, 10, 0.1, 0.5, trial);
      boxes.push_back(boxes[2]);  // forced tie
      std::vector<std::pair<double, int>> ref;
      for (int i = 0; i < static_cast<int>(boxes.size()); ++i) {
        double s = 0;
        for (int y = boxes[i].top; y < boxes[i].top + boxes[i].height; ++y)
          for (int x = boxes[i].left; x < boxes[i].left + boxes[i].width; ++x) s += cam.values.at(y, x);
        ref.emplace_back(-s, i);
      }
      std::sort(ref.begin(), ref.end());
      auto top = select_top_cam(boxes, cam, 3);
      for (int j = 0; j < 3; ++j) {
        CHECK(top[j].box == boxes[ref[j].second]);
        CHECK(top[j].cam_mass == doctest::Approx(-ref[j].first));
      }
    }
  }

  TEST_CASE("hardest selection") {
    PatchPool pool;
    pool.per_class = {{with_conf(0, 0.9), with_conf(1, 0.5), with_conf(2, 0.3)}};
    auto one = select_hardest(pool, 0, 1);
    CHECK(one[0].confidence == 0.3);
    CHECK(select_hardest(pool, 0, 3).size() == 3);
    CHECK(select_hardest(pool, 0, 1, Selection::kHighest)[0].confidence == 0.9);
    CHECK_THROWS_AS(select_hardest(pool, 0, 4), Error);
    CHECK_THROWS_AS(select_hardest(pool, 1, 1), Error);
  }

  TEST_CASE("lowest selection has mean confidence no larger than the pool") {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
      PatchPool pool;
      pool.per_class.resize(1);
      for (int i = 0; i < 40; ++i) pool.per_class[0].push_back(with_conf(i, uniform01(rng)));
      auto pick = select_hardest(pool, 0, 10);
      double m_pick = 0, m_all = 0, max_pick = 0;
      for (auto& p : pick) {
        m_pick += p.confidence / 10;
        max_pick = std::max(max_pick, p.confidence);
      }
      for (auto& p : pool.per_class[0]) m_all += p.confidence / 40;
      CHECK(m_pick <= m_all);
      int below = 0;
      for (auto& p : pool.per_class[0]) below += p.confidence < max_pick;
      CHECK(below <= 9);
    }
  }

  TEST_CASE("assembly with beta 1 is the resized patch") {
    Rng rng(6);
    Tensor imgs = random_tensor(2, 3, 8, 8, rng);
    Patch p;
    p.source_id = 1;
    p.box = {2, 1, 4, 6};
    auto rec = assemble(imgs, std::vector<Patch>{p}, 0);
    CHECK(rec.image == resize_bilinear(crop(imgs, 1, p.box), 8, 8));
    CHECK(!rec.refined);
    CHECK(rec.provenance.size() == 1);
  }

  TEST_CASE("assembly with beta 4 places quadrants bit-exactly") {
    Rng rng(7);
    Tensor imgs = random_tensor(4, 3, 16, 16, rng);
    std::vector<Patch> ps;
    for (int i = 0; i < 4; ++i) {
      Patch p;
      p.source_id = i;
      p.box = {i, i, 10, 12 - i};
      ps.push_back(p);
    }
    auto rec = assemble(imgs, ps, 0);
    for (int i = 0; i < 4; ++i) {
      const Box cell = grid_cell(i, 2, 16, 16);
      CHECK(cell.height == 8);
      auto expect = resize_bilinear(crop(imgs, i, ps[i].box), 8, 8);
      CHECK(crop(rec.image, 0, cell) == expect);
    }
    ps.pop_back();
    CHECK_THROWS_AS(assemble(imgs, ps, 0), Error);
    ps.push_back(ps.back());
    ps.back().class_id = 1;
    CHECK_THROWS_AS(assemble(imgs, ps, 0), Error);
  }

  TEST_CASE("grid cells tile the image") {
    for (int n : {1, 2, 3}) {
      std::vector<int> cover(16 * 16, 0);
      for (int i = 0; i < n * n; ++i) {
        Box b = grid_cell(i, n, 16, 16);
        for (int y = b.top; y < b.top + b.height; ++y)
          for (int x = b.left; x < b.left + b.width; ++x) ++cover[y * 16 + x];
      }
      for (int v : cover) CHECK(v == 1);
    }
  }

  TEST_CASE("end-to-end discovery counts, uniqueness and determinism") {
    auto model = tiny_model(3, 3, 16);
    auto data = toy_set(12, 3, 16, 8);
    CiddConfig cfg;
    cfg.ipc = 5;
    cfg.beta = 4;
    cfg.k = 6;
    cfg.t = 2;
    auto a = run_cidd(model, data, cfg, 11);
    auto b = run_cidd(model, data, cfg, 11);
    REQUIRE(a.size() == 15);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].image == b[i].image);
    for (int y = 0; y < 3; ++y) {
      std::set<std::tuple<int, int, int, int, int>> used;
      std::vector<double> confs;
      for (const auto& r : a) {
        if (r.class_id != y) continue;
        CHECK(r.provenance.size() == 4);
        for (const auto& p : r.provenance) {
          CHECK(p.class_id == y);
          CHECK(data.labels[p.source_id] == y);
          used.insert({p.source_id, p.box.top, p.box.left, p.box.height, p.box.width});
          confs.push_back(p.confidence);
        }
      }
      CHECK(used.size() == 20);
      CHECK(std::is_sorted(confs.begin(), confs.end()));
    }
    auto pool = build_pool(model, data, cfg, 11);
    const auto& p0 = pool.per_class[0][3];
    CHECK(std::abs(p0.confidence - patch_confidence(model, data.images, p0)) < 1e-12);
    cfg.ipc = 13;
    CHECK_THROWS_AS(run_cidd(model, data, cfg, 11), Error);
    cfg.ipc = 1;
    cfg.beta = 3;
    CHECK_THROWS_AS(run_cidd(model, data, cfg, 11), Error);
  }

  TEST_CASE("random real baseline") {
    auto data = toy_set(6, 3, 8, 1);
    auto recs = random_real_init(data, 4, 2);
    REQUIRE(recs.size() == 12);
    for (const auto& r : recs) {
      CHECK(data.labels[r.provenance[0].source_id] == r.class_id);
      CHECK(r.image == data.images.image(r.provenance[0].source_id));
    }
    CHECK_THROWS_AS(random_real_init(data, 7, 2), Error);
  }
}
