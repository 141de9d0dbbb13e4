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

#include "nrrdd/label_store.hpp"

#include <cmath>
#include <limits>

#include "nrrdd/binio.hpp"
#include "nrrdd/refine.hpp"
#include "nrrdd/train.hpp"

namespace nrrdd {

namespace {

constexpr char kMagic[4] = {'N', 'R', 'R', 'D'};
constexpr std::size_t kPairPrefixBytes = 32;  // indices, classes, spec body
constexpr std::uint64_t kExtraPairTag = 0xe7a2;

}  // namespace

std::string to_string(LabelMode m) {
  switch (m) {
    case LabelMode::kDbr: return "dbr";
    case LabelMode::kSl: return "sl";
    case LabelMode::kCl: return "cl";
    case LabelMode::kOh: return "oh";
  }
  return "?";
}

LabelMode parse_label_mode(const std::string& s) {
  if (s == "dbr") return LabelMode::kDbr;
  if (s == "sl") return LabelMode::kSl;
  if (s == "cl") return LabelMode::kCl;
  if (s == "oh") return LabelMode::kOh;
  fail(ErrorCode::kConfig, "unknown label mode '" + s + "' (expected dbr, sl, cl or oh)");
}

std::size_t label_data_bytes(LabelMode mode, std::uint32_t num_classes) {
  switch (mode) {
    case LabelMode::kDbr: return 2 * sizeof(float);
    case LabelMode::kSl: return static_cast<std::size_t>(num_classes) * sizeof(float);
    case LabelMode::kCl: return 2 * sizeof(float);
    case LabelMode::kOh: return 0;
  }
  return 0;
}

std::size_t record_bytes(LabelMode mode, std::uint32_t num_classes) {
  if (mode == LabelMode::kOh) return sizeof(std::uint32_t) + sizeof(std::uint16_t);
  return kPairPrefixBytes + label_data_bytes(mode, num_classes);
}

std::size_t store_bytes(LabelMode mode, std::uint32_t num_classes, std::size_t count) {
  return kStoreHeaderBytes + count * record_bytes(mode, num_classes) + kStoreFooterBytes;
}

std::vector<double> soft_label(const ModelSnapshot& model, const Tensor& x_mix) {
  const ForwardTrace t = forward(model, x_mix.n() == 1 ? x_mix : x_mix.image(0));
  return {t.probs.data(), t.probs.data() + t.classes()};
}

std::pair<double, double> dbr_distances(std::span<const double> y_soft, int y_org, int y_aug) {
  const int K = static_cast<int>(y_soft.size());
  require(y_org >= 0 && y_org < K && y_aug >= 0 && y_aug < K, ErrorCode::kInvalidArgument,
          "class id out of range for the soft label");
  double s = 0.0;
  for (double p : y_soft) {
    require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidArgument,
            "soft label entry outside [0, 1]");
    s += p;
  }
  require(std::abs(s - 1.0) <= 1e-6, ErrorCode::kInvalidArgument, "soft label does not sum to 1");
  return {-std::log(y_soft[y_org] + kProbFloor), -std::log(y_soft[y_aug] + kProbFloor)};
}

Tensor record_images(const std::vector<SyntheticRecord>& records) {
  require(!records.empty(), ErrorCode::kInvalidArgument, "no synthetic records");
  Tensor out(static_cast<int>(records.size()), records[0].image.image_shape());
  for (std::size_t i = 0; i < records.size(); ++i) out.set_image(static_cast<int>(i), records[i].image);
  return out;
}

Tensor reconstruct_mix(const Tensor& images, const LabelRecord& rec) {
  require(rec.org_idx < static_cast<std::uint32_t>(images.n()) &&
              rec.aug_idx < static_cast<std::uint32_t>(images.n()),
          ErrorCode::kInvalidArgument, "label record points past the synthetic set");
  Tensor out(1, images.image_shape());
  apply_into(rec.spec, images.image_span(static_cast<int>(rec.org_idx)),
             images.image_span(static_cast<int>(rec.aug_idx)), out.image_span(0),
             images.image_shape());
  return out;
}

LabelStore relabel(const ModelSnapshot& model, std::vector<SyntheticRecord>& records,
                   const RelabelConfig& cfg) {
  require(cfg.pairs_per_image >= 1, ErrorCode::kConfig, "pairs_per_image must be >= 1");
  require(!records.empty(), ErrorCode::kInvalidArgument, "no synthetic records to relabel");
  for (const auto& r : records)
    require(r.refined || cfg.allow_unrefined, ErrorCode::kInvalidArgument,
            "unrefined record; set allow_unrefined for discovery-only runs");
  const int K = model.num_classes();
  LabelStore store;
  store.mode = cfg.mode;
  store.mix = cfg.mix;
  store.num_classes = static_cast<std::uint32_t>(K);
  const Tensor images = record_images(records);
  const int n = images.n();

  if (cfg.mode == LabelMode::kOh) {
    for (int i = 0; i < n; ++i) {
      LabelRecord rec;
      rec.org_idx = static_cast<std::uint32_t>(i);
      rec.y_org = records[i].class_id;
      store.records.push_back(rec);
    }
    return store;
  }

  for (int i = 0; i < n; ++i)
    for (int p = 0; p < cfg.pairs_per_image; ++p) {
      LabelRecord rec;
      rec.org_idx = static_cast<std::uint32_t>(i);
      if (p == 0 && records[i].partner_idx && records[i].aug_spec &&
          records[i].aug_spec->method == cfg.mix) {
        rec.aug_idx = static_cast<std::uint32_t>(*records[i].partner_idx);
        rec.spec = *records[i].aug_spec;
      } else {
        const PartnerDraw d =
            draw_partner(records, i, derive_seed(cfg.seed, {kExtraPairTag}),
                         static_cast<std::uint64_t>(p), cfg.mix, cfg.same_class_partner);
        rec.aug_idx = static_cast<std::uint32_t>(d.partner);
        rec.spec = d.spec;
      }
      rec.y_org = records[i].class_id;
      rec.y_aug = records[rec.aug_idx].class_id;
      store.records.push_back(rec);
    }

  // Teacher queries in chunks.
  constexpr int kChunk = 100;
  const int total = static_cast<int>(store.records.size());
  for (int s = 0; s < total; s += kChunk) {
    const int m = std::min(kChunk, total - s);
    Tensor batch(m, images.image_shape());
    for (int j = 0; j < m; ++j) batch.set_image(j, reconstruct_mix(images, store.records[s + j]));
    const ForwardTrace t = forward(model, batch);
    for (int j = 0; j < m; ++j) {
      LabelRecord& rec = store.records[s + j];
      const std::span<const double> probs(t.probs.data() + static_cast<std::size_t>(j) * K, K);
      switch (cfg.mode) {
        case LabelMode::kDbr: {
          const auto [a, b] = dbr_distances(probs, rec.y_org, rec.y_aug);
          rec.d_org = static_cast<float>(a);
          rec.d_aug = static_cast<float>(b);
          break;
        }
        case LabelMode::kSl:
          rec.probs.assign(probs.begin(), probs.end());
          break;
        case LabelMode::kCl:
          rec.probs = {static_cast<float>(probs[rec.y_org]), static_cast<float>(probs[rec.y_aug])};
          break;
        case LabelMode::kOh:
          break;
      }
    }
  }

  if (cfg.mode == LabelMode::kDbr)
    for (std::size_t k = 0; k < store.records.size(); k += cfg.pairs_per_image) {
      const LabelRecord& rec = store.records[k];
      SyntheticRecord& r = records[rec.org_idx];
      r.partner_idx = static_cast<int>(rec.aug_idx);
      r.aug_spec = rec.spec;
      r.d_org = rec.d_org;
      r.d_aug = rec.d_aug;
    }
  return store;
}

std::vector<std::pair<double, double>> recompute_distances(const ModelSnapshot& model,
                                                           const Tensor& images,
                                                           const LabelStore& store) {
  require(store.mode == LabelMode::kDbr, ErrorCode::kModeMismatch,
          "distance recomputation needs a DBR store");
  std::vector<std::pair<double, double>> out;
  constexpr int kChunk = 100;
  const int total = static_cast<int>(store.records.size());
  const int K = model.num_classes();
  for (int s = 0; s < total; s += kChunk) {
    const int m = std::min(kChunk, total - s);
    Tensor batch(m, images.image_shape());
    for (int j = 0; j < m; ++j) batch.set_image(j, reconstruct_mix(images, store.records[s + j]));
    const ForwardTrace t = forward(model, batch);
    for (int j = 0; j < m; ++j) {
      const auto& rec = store.records[s + j];
      out.push_back(dbr_distances({t.probs.data() + static_cast<std::size_t>(j) * K,
                                   static_cast<std::size_t>(K)},
                                  rec.y_org, rec.y_aug));
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize_store(const LabelStore& store) {
  const std::uint32_t K = store.num_classes;
  require(K >= 1 && K <= std::numeric_limits<std::uint16_t>::max() + 1u,
          ErrorCode::kInvalidArgument, "num_classes out of range for the store");
  ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.put(kStoreVersion);
  w.put(static_cast<std::uint8_t>(store.mode));
  w.put(static_cast<std::uint8_t>(store.mix));
  w.put(static_cast<std::uint32_t>(store.records.size()));
  w.put(K);
  for (const LabelRecord& r : store.records) {
    require(r.y_org >= 0 && static_cast<std::uint32_t>(r.y_org) < K, ErrorCode::kInvalidArgument,
            "record class out of range");
    w.put(r.org_idx);
    if (store.mode == LabelMode::kOh) {
      w.put(static_cast<std::uint16_t>(r.y_org));
      continue;
    }
    require(r.y_aug >= 0 && static_cast<std::uint32_t>(r.y_aug) < K, ErrorCode::kInvalidArgument,
            "record partner class out of range");
    require(r.spec.method == store.mix, ErrorCode::kInvalidArgument,
            "record mix method differs from the store header");
    w.put(r.aug_idx);
    w.put(static_cast<std::uint16_t>(r.y_org));
    w.put(static_cast<std::uint16_t>(r.y_aug));
    put_spec_body(w, r.spec);
    switch (store.mode) {
      case LabelMode::kDbr:
        // The DBR schema has no room for probabilities.
        require(r.probs.empty(), ErrorCode::kInvalidArgument,
                "DBR record carries a soft label");
        w.put(r.d_org);
        w.put(r.d_aug);
        break;
      case LabelMode::kSl:
        require(r.probs.size() == K, ErrorCode::kInvalidArgument,
                "SL record needs num_classes probabilities");
        for (float p : r.probs) w.put(p);
        break;
      case LabelMode::kCl:
        require(r.probs.size() == 2, ErrorCode::kInvalidArgument, "CL record needs two entries");
        for (float p : r.probs) w.put(p);
        break;
      case LabelMode::kOh:
        break;
    }
  }
  seal_with_crc(w);
  return std::move(w.bytes());
}

LabelStore deserialize_store(std::span<const std::uint8_t> bytes, std::optional<LabelMode> expect) {
  require(bytes.size() >= kStoreHeaderBytes + kStoreFooterBytes, ErrorCode::kCorrupt,
          "label store too short");
  require(std::equal(kMagic, kMagic + 4, bytes.begin()), ErrorCode::kCorrupt,
          "not a label store (bad magic)");
  const auto body = check_crc(bytes);
  ByteReader r(body);
  r.get_bytes(4);
  const auto version = r.get<std::uint16_t>();
  require(version == kStoreVersion, ErrorCode::kVersionMismatch,
          "label store version " + std::to_string(version) + " not supported");
  const auto mode = r.get<std::uint8_t>();
  const auto mix = r.get<std::uint8_t>();
  require(mode <= 3 && mix <= 1, ErrorCode::kCorrupt, "bad mode or mix code");
  LabelStore s;
  s.mode = static_cast<LabelMode>(mode);
  s.mix = static_cast<MixMethod>(mix);
  if (expect)
    require(*expect == s.mode, ErrorCode::kModeMismatch,
            "store holds " + to_string(s.mode) + " records, " + to_string(*expect) + " expected");
  const auto count = r.get<std::uint32_t>();
  s.num_classes = r.get<std::uint32_t>();
  require(s.num_classes >= 1, ErrorCode::kCorrupt, "store with zero classes");
  require(r.remaining() == static_cast<std::size_t>(count) * record_bytes(s.mode, s.num_classes),
          ErrorCode::kCorrupt, "record section has the wrong size");
  s.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    LabelRecord rec;
    rec.org_idx = r.get<std::uint32_t>();
    if (s.mode == LabelMode::kOh) {
      rec.y_org = r.get<std::uint16_t>();
      s.records.push_back(rec);
      continue;
    }
    rec.aug_idx = r.get<std::uint32_t>();
    rec.y_org = r.get<std::uint16_t>();
    rec.y_aug = r.get<std::uint16_t>();
    rec.spec = get_spec_body(r, s.mix);
    switch (s.mode) {
      case LabelMode::kDbr:
        rec.d_org = r.get<float>();
        rec.d_aug = r.get<float>();
        break;
      case LabelMode::kSl:
        rec.probs.resize(s.num_classes);
        for (float& p : rec.probs) p = r.get<float>();
        break;
      case LabelMode::kCl:
        rec.probs.resize(2);
        for (float& p : rec.probs) p = r.get<float>();
        break;
      case LabelMode::kOh:
        break;
    }
    s.records.push_back(std::move(rec));
  }
  return s;
}

void write_store(const std::filesystem::path& path, const LabelStore& store) {
  write_file(path, serialize_store(store));
}

LabelStore read_store(const std::filesystem::path& path, std::optional<LabelMode> expect) {
  return deserialize_store(read_file(path), expect);
}

}  // namespace nrrdd
