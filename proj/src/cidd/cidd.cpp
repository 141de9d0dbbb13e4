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

#include "nrrdd/cidd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nrrdd/imageops.hpp"
#include "nrrdd/rng.hpp"

namespace nrrdd {

namespace {

constexpr std::uint64_t kCropTag = 0xc209;
constexpr std::uint64_t kRealTag = 0x4ea1;

}  // namespace

Selection parse_selection(const std::string& s) {
  if (s == "lowest") return Selection::kLowest;
  if (s == "highest") return Selection::kHighest;
  fail(ErrorCode::kConfig, "unknown selection '" + s + "' (expected lowest or highest)");
}

std::string to_string(Selection s) { return s == Selection::kLowest ? "lowest" : "highest"; }

int grid_side(int beta) {
  require(beta >= 1, ErrorCode::kInvalidArgument, "beta must be >= 1");
  const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(beta))));
  require(s * s == beta, ErrorCode::kInvalidArgument,
          "beta = " + std::to_string(beta) + " is not a perfect square");
  return s;
}

std::vector<Box> crop_candidates(int height, int width, int k, double scale_lo, double scale_hi,
                                 std::uint64_t seed, double aspect_lo, double aspect_hi) {
  require(k >= 1, ErrorCode::kInvalidArgument, "k must be >= 1");
  require(height > 0 && width > 0, ErrorCode::kInvalidArgument, "empty image");
  require(scale_lo > 0.0 && scale_lo <= scale_hi, ErrorCode::kInvalidArgument,
          "scale range must satisfy 0 < lo <= hi");
  require(scale_hi <= 1.0, ErrorCode::kInvalidArgument,
          "crop scale " + std::to_string(scale_hi) + " exceeds the image");
  require(aspect_lo > 0.0 && aspect_lo <= aspect_hi, ErrorCode::kInvalidArgument,
          "aspect range must satisfy 0 < lo <= hi");
  Rng rng(derive_seed(seed, {kCropTag}));
  const double full = static_cast<double>(height) * width;
  std::vector<Box> boxes;
  boxes.reserve(k);
  for (int i = 0; i < k; ++i) {
    const double area = full * uniform(rng, scale_lo, scale_hi);
    // Aspect ratios for which the box fits, intersected with the configured range.
    const double feas_lo = area / (static_cast<double>(height) * height);
    const double feas_hi = static_cast<double>(width) * width / area;
    double lo = std::max(aspect_lo, feas_lo), hi = std::min(aspect_hi, feas_hi);
    if (lo > hi) lo = hi = std::clamp(1.0, feas_lo, feas_hi);
    const double r = std::exp(uniform(rng, std::log(lo), std::log(hi)));
    Box b;
    b.width = std::clamp(static_cast<int>(std::lround(std::sqrt(area * r))), 1, width);
    b.height = std::clamp(static_cast<int>(std::lround(std::sqrt(area / r))), 1, height);
    b.top = static_cast<int>(uniform_index(rng, height - b.height + 1));
    b.left = static_cast<int>(uniform_index(rng, width - b.width + 1));
    boxes.push_back(b);
  }
  return boxes;
}

double box_mass(const CamMap& cam, const Box& box) {
  require(box.inside(cam.values.height, cam.values.width), ErrorCode::kInvalidArgument,
          "box outside the CAM");
  double s = 0.0;
  for (int y = box.top; y < box.top + box.height; ++y)
    for (int x = box.left; x < box.left + box.width; ++x) s += cam.values.at(y, x);
  return s;
}

std::vector<Patch> select_top_cam(std::span<const Box> boxes, const CamMap& cam, int t) {
  require(t >= 0 && static_cast<std::size_t>(t) <= boxes.size(), ErrorCode::kInvalidArgument,
          "t = " + std::to_string(t) + " exceeds the " + std::to_string(boxes.size()) +
              " candidate boxes");
  std::vector<Patch> all;
  all.reserve(boxes.size());
  for (const Box& b : boxes) {
    Patch p;
    p.box = b;
    p.cam_mass = box_mass(cam, b);
    p.class_id = cam.class_id;
    all.push_back(p);
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Patch& a, const Patch& b) { return a.cam_mass > b.cam_mass; });
  all.resize(t);
  return all;
}

std::vector<Patch> select_hardest(const PatchPool& pool, int class_id, int g, Selection selection) {
  require(class_id >= 0 && static_cast<std::size_t>(class_id) < pool.per_class.size(),
          ErrorCode::kInvalidArgument, "class " + std::to_string(class_id) + " not in pool");
  const auto& list = pool.per_class[class_id];
  require(g >= 0 && static_cast<std::size_t>(g) <= list.size(), ErrorCode::kInvalidArgument,
          "patch pool for class " + std::to_string(class_id) + " holds " +
              std::to_string(list.size()) + " patches, " + std::to_string(g) + " needed");
  std::vector<Patch> out = list;
  if (selection == Selection::kLowest)
    std::stable_sort(out.begin(), out.end(),
                     [](const Patch& a, const Patch& b) { return a.confidence < b.confidence; });
  else
    std::stable_sort(out.begin(), out.end(),
                     [](const Patch& a, const Patch& b) { return a.confidence > b.confidence; });
  out.resize(g);
  return out;
}

double patch_confidence(const ModelSnapshot& model, const Tensor& images, const Patch& patch) {
  const ImageShape s = model.input_shape();
  return confidence(model, resize_bilinear(crop(images, patch.source_id, patch.box), s.height,
                                           s.width));
}

Box grid_cell(int i, int n, int height, int width) {
  const int r = i / n, c = i % n;
  Box b;
  b.top = r * height / n;
  b.left = c * width / n;
  b.height = (r + 1) * height / n - b.top;
  b.width = (c + 1) * width / n - b.left;
  return b;
}

SyntheticRecord assemble(const Tensor& images, std::span<const Patch> patches, int class_id) {
  const int n = grid_side(static_cast<int>(patches.size()));
  SyntheticRecord rec;
  rec.class_id = class_id;
  rec.image = Tensor(1, images.image_shape());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Patch& p = patches[i];
    require(p.class_id == class_id, ErrorCode::kInvalidArgument,
            "patch of class " + std::to_string(p.class_id) + " assembled into class " +
                std::to_string(class_id));
    require(p.source_id >= 0 && p.source_id < images.n(), ErrorCode::kInvalidArgument,
            "patch source out of range");
    const Box cell = grid_cell(static_cast<int>(i), n, images.h(), images.w());
    const Tensor piece = resize_bilinear(crop(images, p.source_id, p.box), cell.height, cell.width);
    for (int c = 0; c < images.c(); ++c)
      for (int y = 0; y < cell.height; ++y)
        for (int x = 0; x < cell.width; ++x)
          rec.image.at(0, c, cell.top + y, cell.left + x) = piece.at(0, c, y, x);
    rec.provenance.push_back(p);
  }
  return rec;
}

PatchPool build_pool(const ModelSnapshot& model, const LabeledSet& data, const CiddConfig& cfg,
                     std::uint64_t seed) {
  check_labeled_set(data);
  require(data.images.image_shape() == model.input_shape(), ErrorCode::kShapeMismatch,
          "dataset images do not match the model input");
  require(cfg.t >= 1 && cfg.t <= cfg.k, ErrorCode::kConfig, "cidd needs 1 <= t <= k");
  const int K = model.num_classes();
  const int H = data.images.h(), W = data.images.w();

  // Source images per class, in dataset order, optionally truncated.
  std::vector<std::vector<int>> by_class(K);
  for (int i = 0; i < data.size(); ++i) {
    const int y = data.labels[i];
    if (cfg.images_per_class <= 0 || static_cast<int>(by_class[y].size()) < cfg.images_per_class)
      by_class[y].push_back(i);
  }

  PatchPool pool;
  pool.per_class.resize(K);
  constexpr int kChunk = 100;
  for (int y = 0; y < K; ++y) {
    const auto& ids = by_class[y];
    for (std::size_t start = 0; start < ids.size(); start += kChunk) {
      const int n = static_cast<int>(std::min<std::size_t>(kChunk, ids.size() - start));
      Tensor chunk(n, data.images.image_shape());
      std::vector<int> cls(n, y);
      for (int i = 0; i < n; ++i) chunk.set_image(i, data.images.image(ids[start + i]));
      const auto cams = batch_cams(model, chunk, cls);

      std::vector<Patch> kept;
      for (int i = 0; i < n; ++i) {
        const int src = ids[start + i];
        const auto boxes = crop_candidates(H, W, cfg.k, cfg.scale_lo, cfg.scale_hi,
                                           derive_seed(seed, {static_cast<std::uint64_t>(src)}),
                                           cfg.aspect_lo, cfg.aspect_hi);
        // Identical boxes from one image would be the same patch twice.
        int taken = 0;
        const std::size_t first = kept.size();
        for (Patch p : select_top_cam(boxes, cams[i], cfg.k)) {
          if (taken == cfg.t) break;
          if (std::any_of(kept.begin() + first, kept.end(),
                          [&](const Patch& q) { return q.box == p.box; }))
            continue;
          p.source_id = src;
          kept.push_back(p);
          ++taken;
        }
      }
      Tensor resized(static_cast<int>(kept.size()), data.images.image_shape());
      for (std::size_t j = 0; j < kept.size(); ++j)
        resized.set_image(static_cast<int>(j),
                          resize_bilinear(crop(data.images, kept[j].source_id, kept[j].box), H, W));
      for (int s = 0; s < resized.n(); s += kChunk) {
        const int m = std::min(kChunk, resized.n() - s);
        Tensor part(m, data.images.image_shape());
        for (int j = 0; j < m; ++j) part.set_image(j, resized.image(s + j));
        const ForwardTrace t = forward(model, part);
        for (int j = 0; j < m; ++j) {
          double best = 0.0;
          for (int c = 0; c < t.classes(); ++c) best = std::max(best, t.prob(j, c));
          kept[s + j].confidence = best;
        }
      }
      pool.per_class[y].insert(pool.per_class[y].end(), kept.begin(), kept.end());
    }
  }
  return pool;
}

std::vector<SyntheticRecord> run_cidd(const ModelSnapshot& model, const LabeledSet& data,
                                      const CiddConfig& cfg, std::uint64_t seed) {
  require(cfg.ipc >= 1, ErrorCode::kConfig, "ipc must be >= 1");
  grid_side(cfg.beta);
  const PatchPool pool = build_pool(model, data, cfg, seed);
  const int g = cfg.beta * cfg.ipc;
  std::vector<SyntheticRecord> out;
  for (int y = 0; y < model.num_classes(); ++y) {
    const auto chosen = select_hardest(pool, y, g, cfg.selection);
    for (int r = 0; r < cfg.ipc; ++r)
      out.push_back(assemble(data.images,
                             std::span<const Patch>(chosen).subspan(r * cfg.beta, cfg.beta), y));
  }
  return out;
}

std::vector<SyntheticRecord> random_real_init(const LabeledSet& data, int ipc, std::uint64_t seed) {
  check_labeled_set(data);
  require(ipc >= 1, ErrorCode::kConfig, "ipc must be >= 1");
  std::vector<std::vector<int>> by_class(data.num_classes);
  for (int i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  Rng rng(derive_seed(seed, {kRealTag}));
  std::vector<SyntheticRecord> out;
  for (int y = 0; y < data.num_classes; ++y) {
    auto ids = by_class[y];
    require(static_cast<int>(ids.size()) >= ipc, ErrorCode::kInvalidArgument,
            "class " + std::to_string(y) + " has fewer than ipc images");
    shuffle(ids.begin(), ids.end(), rng);
    for (int r = 0; r < ipc; ++r) {
      Patch p;
      p.source_id = ids[r];
      p.box = {0, 0, data.images.h(), data.images.w()};
      p.class_id = y;
      p.confidence = kUnset;
      SyntheticRecord rec;
      rec.class_id = y;
      rec.image = data.images.image(ids[r]);
      rec.provenance.push_back(p);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace nrrdd
