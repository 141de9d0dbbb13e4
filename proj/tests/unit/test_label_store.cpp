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
#include "nrrdd/binio.hpp"
#include "nrrdd/label_store.hpp"
#include "nrrdd/refine.hpp"
#include "support.hpp"

using namespace nrrdd;
using nrrdd::testing::random_tensor;
using nrrdd::testing::scratch_dir;
using nrrdd::testing::tiny_model;

namespace {

std::vector<SyntheticRecord> refined_records(int n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SyntheticRecord> recs;
  for (int i = 0; i < n; ++i) {
    SyntheticRecord r;
    r.class_id = i % classes;
    r.image = random_tensor(1, 3, 16, 16, rng);
    recs.push_back(std::move(r));
  }
  for (int i = 0; i < n; ++i) {
    auto d = draw_partner(recs, i, seed, 0, MixMethod::kCutmix, false);
    recs[i].partner_idx = d.partner;
    recs[i].aug_spec = d.spec;
    recs[i].refined = true;
  }
  return recs;
}

LabelStore synthetic_store(LabelMode mode, std::uint32_t K, int count, std::uint64_t seed) {
  Rng rng(seed);
  LabelStore s;
  s.mode = mode;
  s.mix = MixMethod::kMixup;
  s.num_classes = K;
  for (int i = 0; i < count; ++i) {
    LabelRecord r;
    r.org_idx = i;
    r.y_org = static_cast<int>(uniform_index(rng, K));
    if (mode != LabelMode::kOh) {
      r.aug_idx = (i + 1) % count;
      r.y_aug = static_cast<int>(uniform_index(rng, K));
      r.spec = sample_spec(MixMethod::kMixup, seed + i, 32, 32);
    }
    if (mode == LabelMode::kDbr) {
      r.d_org = static_cast<float>(uniform01(rng));
      r.d_aug = static_cast<float>(uniform01(rng));
    } else if (mode == LabelMode::kSl) {
      r.probs.assign(K, 1.0f / K);
    } else if (mode == LabelMode::kCl) {
      r.probs = {0.6f, 0.3f};
    }
    s.records.push_back(r);
  }
  return s;
}

}  // namespace

TEST_SUITE("label_store") {
  TEST_CASE("distance examples") {
    std::vector<double> onehot{0, 1, 0};
    auto [a, b] = dbr_distances(onehot, 1, 2);
    CHECK(a == doctest::Approx(0.0).epsilon(1e-11));
    CHECK(b == doctest::Approx(-std::log(1e-12)));
    std::vector<double> uni(10, 0.1);
    auto [c, d] = dbr_distances(uni, 3, 7);
    CHECK(c == doctest::Approx(2.3026).epsilon(1e-4));
    CHECK(d == c);
    std::vector<double> p{0.7, 0.2, 0.1};
    auto [e, f] = dbr_distances(p, 0, 1);
    CHECK(std::abs(e - 0.35667) < 1e-4);
    CHECK(std::abs(f - 1.60944) < 1e-4);
    std::vector<double> bad{0.7, 0.7};
    CHECK_THROWS_AS(dbr_distances(bad, 0, 1), Error);
    std::vector<double> neg{1.2, -0.2};
    CHECK_THROWS_AS(dbr_distances(neg, 0, 1), Error);
  }

  TEST_CASE("soft label equals forward probabilities") {
    auto m = tiny_model(1, 4, 16);
    Rng rng(2);
    Tensor x = random_tensor(1, 3, 16, 16, rng);
    auto p = soft_label(m, x);
    auto t = forward(m, x);
    double s = 0;
    for (int k = 0; k < 4; ++k) {
      CHECK(p[k] == t.prob(0, k));
      s += p[k];
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
    CHECK(soft_label(m, x) == p);
  }

  TEST_CASE("record sizes") {
    CHECK(record_bytes(LabelMode::kDbr, 10) == 40);
    CHECK(record_bytes(LabelMode::kDbr, 1000) == 40);
    CHECK(record_bytes(LabelMode::kSl, 1000) == 32 + 4000);
    CHECK(record_bytes(LabelMode::kCl, 1000) == 40);
    CHECK(record_bytes(LabelMode::kOh, 1000) == 6);
    CHECK(label_data_bytes(LabelMode::kSl, 1000) == 4000);
    CHECK(label_data_bytes(LabelMode::kDbr, 1000) == 8);
    CHECK(label_data_bytes(LabelMode::kSl, 1000) / label_data_bytes(LabelMode::kDbr, 1000) == 500);
    CHECK(encode_spec(AugmentSpec{}).size() == 24);
  }

  TEST_CASE("serialization round trips and sizes are exact") {
    for (auto mode : {LabelMode::kDbr, LabelMode::kSl, LabelMode::kCl, LabelMode::kOh})
      for (std::uint32_t K : {1u, 10u, 100u}) {
        auto s = synthetic_store(mode, K, 17, K);
        auto bytes = serialize_store(s);
        CHECK(bytes.size() == store_bytes(mode, K, 17));
        auto back = deserialize_store(bytes);
        CHECK(back == s);
        CHECK(serialize_store(back) == bytes);
      }
  }

  TEST_CASE("header layout") {
    auto bytes = serialize_store(synthetic_store(LabelMode::kCl, 12, 3, 1));
    CHECK(bytes[0] == 'N');
    CHECK(bytes[3] == 'D');
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == static_cast<std::uint8_t>(LabelMode::kCl));
    CHECK(bytes[7] == static_cast<std::uint8_t>(MixMethod::kMixup));
    CHECK(bytes[8] == 3);
    CHECK(bytes[12] == 12);
  }

  TEST_CASE("file errors: truncation, version, mode, magic") {
    auto dir = scratch_dir("store");
    auto s = synthetic_store(LabelMode::kDbr, 10, 5, 3);
    write_store(dir / "a.nrrd", s);
    CHECK(read_store(dir / "a.nrrd") == s);
    auto bytes = read_file(dir / "a.nrrd");

    auto cut = bytes;
    cut.resize(cut.size() - 7);
    try {
      deserialize_store(cut);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCorrupt);
    }

    try {
      read_store(dir / "a.nrrd", LabelMode::kSl);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kModeMismatch);
    }

    auto v2 = bytes;
    v2[4] = 2;
    v2.resize(v2.size() - 4);
    ByteWriter w;
    w.put_bytes(v2);
    seal_with_crc(w);
    try {
      deserialize_store(w.bytes());
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kVersionMismatch);
    }

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_store(bad), Error);
    try {
      read_store(dir / "missing.nrrd");
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingArtifact);
    }
  }

  TEST_CASE("DBR schema refuses soft labels") {
    auto s = synthetic_store(LabelMode::kDbr, 10, 2, 4);
    s.records[1].probs = {0.5f};
    CHECK_THROWS_AS(serialize_store(s), Error);
  }

  TEST_CASE("relabel in every mode") {
    auto m = tiny_model(5, 4, 16);
    auto recs = refined_records(8, 4, 6);
    RelabelConfig cfg;
    cfg.mode = LabelMode::kDbr;
    auto dbr = relabel(m, recs, cfg);
    REQUIRE(dbr.records.size() == 8);
    auto imgs = record_images(recs);
    auto again = recompute_distances(m, imgs, dbr);
    for (std::size_t i = 0; i < 8; ++i) {
      const auto& r = dbr.records[i];
      CHECK(r.probs.empty());
      CHECK(r.aug_idx == static_cast<std::uint32_t>(*recs[i].partner_idx));
      CHECK(r.spec == *recs[i].aug_spec);
      CHECK(std::abs(again[i].first - r.d_org) < 1e-5);
      CHECK(std::abs(again[i].second - r.d_aug) < 1e-5);
      CHECK(*recs[i].d_org == r.d_org);
      auto y = soft_label(m, reconstruct_mix(imgs, r));
      auto [a, b] = dbr_distances(y, r.y_org, r.y_aug);
      CHECK(std::abs(a - r.d_org) < 1e-5);
      CHECK(std::abs(b - r.d_aug) < 1e-5);
    }

    cfg.mode = LabelMode::kSl;
    auto sl = relabel(m, recs, cfg);
    for (std::size_t i = 0; i < 8; ++i) {
      const auto& r = sl.records[i];
      CHECK(r.probs.size() == 4);
      CHECK(std::abs(-std::log(r.probs[r.y_org] + 1e-12) - dbr.records[i].d_org) < 1e-5);
    }
    cfg.mode = LabelMode::kCl;
    auto cl = relabel(m, recs, cfg);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(cl.records[i].probs[0] == sl.records[i].probs[sl.records[i].y_org]);
      CHECK(cl.records[i].probs[1] == sl.records[i].probs[sl.records[i].y_aug]);
    }
    cfg.mode = LabelMode::kOh;
    auto oh = relabel(m, recs, cfg);
    CHECK(serialize_store(oh).size() == 16 + 8 * 6 + 4);
    CHECK(serialize_store(oh).size() < serialize_store(dbr).size());
    CHECK(serialize_store(dbr).size() < serialize_store(sl).size());
  }

  TEST_CASE("multiple pairs per image and unrefined records") {
    auto m = tiny_model(7, 3, 16);
    auto recs = refined_records(6, 3, 8);
    RelabelConfig cfg;
    cfg.pairs_per_image = 3;
    auto s = relabel(m, recs, cfg);
    REQUIRE(s.records.size() == 18);
    for (int i = 0; i < 6; ++i) {
      CHECK(s.records[3 * i].aug_idx == static_cast<std::uint32_t>(*recs[i].partner_idx));
      for (int p = 0; p < 3; ++p) {
        CHECK(s.records[3 * i + p].org_idx == static_cast<std::uint32_t>(i));
        CHECK(s.records[3 * i + p].aug_idx != static_cast<std::uint32_t>(i));
      }
    }
    auto raw = recs;
    for (auto& r : raw) r.refined = false;
    CHECK_THROWS_AS(relabel(m, raw, cfg), Error);
    cfg.allow_unrefined = true;
    CHECK(relabel(m, raw, cfg).records.size() == 18);
  }

  TEST_CASE("storage ratio for a hundred classes") {
    auto m = tiny_model(9, 100, 16);
    auto recs = refined_records(120, 100, 10);
    RelabelConfig cfg;
    auto dbr = serialize_store(relabel(m, recs, cfg));
    cfg.mode = LabelMode::kSl;
    auto sl = serialize_store(relabel(m, recs, cfg));
    CHECK(static_cast<double>(sl.size()) / dbr.size() >= 5.0);
  }
}
