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

#include "nrrdd/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "nrrdd/binio.hpp"
#include "nrrdd/imageops.hpp"
#include "nrrdd/rng.hpp"

namespace nrrdd {

namespace fs = std::filesystem;

namespace {

constexpr int kSide = 32;
constexpr std::size_t kPixels = 3 * kSide * kSide;
constexpr int kPerFile = 10000;

void append_records(const fs::path& file, int label_bytes, RawSplit& out) {
  const auto bytes = read_file(file);
  const std::size_t rec = label_bytes + kPixels;
  require(bytes.size() % rec == 0, ErrorCode::kCorrupt,
          file.string() + ": size is not a multiple of the record size");
  for (std::size_t off = 0; off < bytes.size(); off += rec) {
    const int label = bytes[off + label_bytes - 1];
    require(label < out.num_classes, ErrorCode::kCorrupt, file.string() + ": label out of range");
    out.labels.push_back(label);
    out.pixels.insert(out.pixels.end(), bytes.begin() + off + label_bytes, bytes.begin() + off + rec);
  }
}

// Signed inside test for shape s in object coordinates (u, v) in [-1, 1].
bool inside_shape(int s, double u, double v) {
  const double r2 = u * u + v * v;
  const double m = std::max(std::abs(u), std::abs(v));
  switch (s) {
    case 0: return r2 < 0.9;
    case 1: return m < 0.78;
    case 2: return v > -0.85 && v < 0.8 && std::abs(u) < 0.55 * (v + 0.85);
    case 3: return (std::abs(u) < 0.28 && std::abs(v) < 0.92) || (std::abs(v) < 0.28 && std::abs(u) < 0.92);
    case 4: return r2 > 0.3 && r2 < 0.9;
    case 5: return m < 0.9 && std::fmod(v + 1.0, 0.6) < 0.3;
    case 6: return r2 < 1.0 && (std::abs(u - v) < 0.35 || std::abs(u + v) < 0.35);
    case 7: return std::abs(u) + std::abs(v) < 0.95;
    case 8: return m < 0.9 && (static_cast<int>(std::floor((u + 1) * 1.7)) +
                               static_cast<int>(std::floor((v + 1) * 1.7))) % 2 == 0;
    default: return (u - 0.45) * (u - 0.45) + v * v < 0.2 || (u + 0.45) * (u + 0.45) + v * v < 0.2;
  }
}

std::array<double, 3> hsv(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 1.0) + 1.0, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double luma(const std::array<double, 3>& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

struct Placement {
  int shape;
  double cx, cy, radius, angle, stretch;
  std::array<double, 3> color;
};

// 4x supersampled coverage of one shape, composited over `img`.
void draw(std::vector<double>& img, const Placement& p) {
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double dx = x + 0.25 + 0.5 * sx - p.cx, dy = y + 0.25 + 0.5 * sy - p.cy;
          const double u = (ca * dx + sa * dy) / (p.radius * p.stretch);
          const double v = (-sa * dx + ca * dy) / (p.radius / p.stretch);
          hits += inside_shape(p.shape, u, v);
        }
      const double a = hits / 4.0;
      for (int c = 0; c < 3; ++c) {
        double& px = img[(c * kSide + y) * kSide + x];
        px = (1 - a) * px + a * p.color[c];
      }
    }
}

void render(int label, int num_classes, std::uint64_t seed, std::uint8_t* out) {
  Rng rng(seed);
  std::array<double, 3> fg;
  // Hue leans towards a class-specific value, loosely for 10 classes.
  const double hue = num_classes == 100 ? (label / 10) / 10.0 + 0.08 * uniform01(rng)
                                        : 1.0 + (label % 10) / 10.0 + 0.12 * normal(rng);
  fg = hsv(hue, uniform(rng, 0.5, 1.0), uniform(rng, 0.55, 1.0));
  std::array<double, 3> bg;
  do {
    bg = hsv(uniform01(rng), uniform(rng, 0.0, 0.7), uniform(rng, 0.1, 0.95));
  } while (std::abs(luma(bg) - luma(fg)) < 0.22);

  std::vector<double> img(kPixels);
  double fx[3], fy[3], ph[3];
  for (int k = 0; k < 3; ++k) {
    fx[k] = uniform(rng, 0.05, 0.35);
    fy[k] = uniform(rng, 0.05, 0.35);
    ph[k] = uniform(rng, 0.0, 6.2832);
  }
  for (int y = 0; y < kSide; ++y)
    for (int x = 0; x < kSide; ++x) {
      double t = 0.0;
      for (int k = 0; k < 3; ++k) t += 0.05 * std::sin(fx[k] * x + fy[k] * y + ph[k]);
      for (int c = 0; c < 3; ++c) img[(c * kSide + y) * kSide + x] = bg[c] + t;
    }

  if (uniform01(rng) < 0.4) {
    Placement d;
    d.shape = static_cast<int>(uniform_index(rng, 10));
    d.radius = uniform(rng, 0.09, 0.14) * kSide;
    const bool left = uniform01(rng) < 0.5, top = uniform01(rng) < 0.5;
    d.cx = left ? uniform(rng, d.radius, 0.3 * kSide) : uniform(rng, 0.7 * kSide, kSide - d.radius);
    d.cy = top ? uniform(rng, d.radius, 0.3 * kSide) : uniform(rng, 0.7 * kSide, kSide - d.radius);
    d.angle = uniform(rng, -0.5, 0.5);
    d.stretch = 1.0;
    d.color = hsv(uniform01(rng), uniform(rng, 0.3, 1.0), uniform(rng, 0.3, 1.0));
    draw(img, d);
  }

  Placement p;
  p.shape = label % 10;
  p.radius = uniform(rng, 0.22, 0.36) * kSide;
  p.cx = kSide / 2.0 + uniform(rng, -0.15, 0.15) * kSide;
  p.cy = kSide / 2.0 + uniform(rng, -0.15, 0.15) * kSide;
  p.angle = uniform(rng, -0.35, 0.35);
  p.stretch = uniform(rng, 0.88, 1.14);
  p.color = fg;
  draw(img, p);

  for (std::size_t i = 0; i < kPixels; ++i) {
    const double v = std::clamp(img[i] + 0.04 * normal(rng), 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
}

void write_split(const fs::path& root, const GeneratorConfig& cfg, int per_class, bool train) {
  const int K = cfg.num_classes;
  const int total = per_class * K;
  const int label_bytes = K == 100 ? 2 : 1;
  const std::size_t rec = label_bytes + kPixels;
  const int files = K == 100 ? 1 : std::max(1, (total + kPerFile - 1) / kPerFile);
  const int per_file = K == 100 ? total : kPerFile;
  for (int f = 0; f < (train ? files : 1); ++f) {
    const int begin = train ? f * per_file : 0;
    const int end = train ? std::min(total, begin + per_file) : total;
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(end - begin) * rec);
    for (int i = begin; i < end; ++i) {
      const int label = i % K;
      std::uint8_t* r = bytes.data() + static_cast<std::size_t>(i - begin) * rec;
      if (label_bytes == 2) r[0] = static_cast<std::uint8_t>(label / 5);
      r[label_bytes - 1] = static_cast<std::uint8_t>(label);
      render(label, K, derive_seed(cfg.seed, {train ? 1u : 2u, static_cast<std::uint64_t>(i)}),
             r + label_bytes);
    }
    fs::path name = K == 100 ? (train ? "train.bin" : "test.bin")
                             : (train ? "data_batch_" + std::to_string(f + 1) + ".bin"
                                      : "test_batch.bin");
    write_file(root / name, bytes);
  }
}

}  // namespace

RawSplit read_cifar_split(const fs::path& root, bool train) {
  require(fs::is_directory(root), ErrorCode::kMissingArtifact,
          "dataset root '" + root.string() +
              "' does not exist; point data.root or NRRDD_DATA_ROOT at a CIFAR binary archive "
              "or create one with `nrrdd gen-data --root " + root.string() + "`");
  RawSplit out;
  if (fs::exists(root / (train ? "train.bin" : "test.bin"))) {
    out.num_classes = 100;
    append_records(root / (train ? "train.bin" : "test.bin"), 2, out);
    return out;
  }
  out.num_classes = 10;
  if (train) {
    for (int i = 1;; ++i) {
      const fs::path f = root / ("data_batch_" + std::to_string(i) + ".bin");
      if (!fs::exists(f)) break;
      append_records(f, 1, out);
    }
  } else if (fs::exists(root / "test_batch.bin")) {
    append_records(root / "test_batch.bin", 1, out);
  }
  require(out.count() > 0, ErrorCode::kMissingArtifact,
          "no CIFAR " + std::string(train ? "training" : "test") + " batches found under " +
              root.string());
  return out;
}

fs::path resolve_data_root(const fs::path& configured) {
  if (const char* env = std::getenv("NRRDD_DATA_ROOT"); env && *env) return env;
  return configured;
}

namespace {

LabeledSet select_subset(const RawSplit& raw, const std::vector<int>& classes, int per_class,
                         int side) {
  LabeledSet set;
  set.num_classes = static_cast<int>(classes.size());
  std::vector<int> remap(raw.num_classes, -1), taken(classes.size(), 0);
  for (std::size_t j = 0; j < classes.size(); ++j) {
    require(classes[j] >= 0 && classes[j] < raw.num_classes, ErrorCode::kConfig,
            "class id " + std::to_string(classes[j]) + " not in the archive");
    remap[classes[j]] = static_cast<int>(j);
  }
  std::vector<int> picked;
  for (int i = 0; i < raw.count(); ++i) {
    const int j = remap[raw.labels[i]];
    if (j < 0 || taken[j] >= per_class) continue;
    ++taken[j];
    picked.push_back(i);
  }
  for (std::size_t j = 0; j < classes.size(); ++j)
    require(taken[j] == per_class, ErrorCode::kConfig,
            "class " + std::to_string(classes[j]) + " has only " + std::to_string(taken[j]) +
                " images, " + std::to_string(per_class) + " requested");
  set.images = Tensor(static_cast<int>(picked.size()), 3, side, side);
  for (std::size_t k = 0; k < picked.size(); ++k) {
    Tensor img(1, 3, kSide, kSide);
    const std::uint8_t* src = raw.pixels.data() + static_cast<std::size_t>(picked[k]) * kPixels;
    for (std::size_t p = 0; p < kPixels; ++p) img[p] = src[p] / 255.0;
    if (side != kSide) img = resize_bilinear(img, side, side);
    set.images.set_image(static_cast<int>(k), img);
    set.labels.push_back(remap[raw.labels[picked[k]]]);
  }
  return set;
}

void normalize_in_place(Tensor& t, const Normalization& norm) {
  const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c) {
      double* p = t.data() + (static_cast<std::size_t>(n) * t.c() + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - norm.mean[c]) / norm.std[c];
    }
}

}  // namespace

DeskData load_desk_data(const DatasetSpec& spec, const Normalization* norm) {
  require(spec.train_per_class >= 1 && spec.test_per_class >= 0 && spec.resize >= 0,
          ErrorCode::kConfig, "dataset subset sizes must be positive");
  const RawSplit train = read_cifar_split(spec.root, true);
  DeskData d;
  d.class_ids = spec.classes;
  if (d.class_ids.empty())
    for (int c = 0; c < train.num_classes; ++c) d.class_ids.push_back(c);
  const int side = spec.resize > 0 ? spec.resize : kSide;
  d.train = select_subset(train, d.class_ids, spec.train_per_class, side);
  if (spec.test_per_class > 0)
    d.test = select_subset(read_cifar_split(spec.root, false), d.class_ids, spec.test_per_class, side);

  if (norm) {
    d.norm = *norm;
  } else {
    const Tensor& t = d.train.images;
    const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
    d.norm.mean.assign(3, 0.0);
    d.norm.std.assign(3, 0.0);
    for (int c = 0; c < 3; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int n = 0; n < t.n(); ++n) {
        const double* p = t.data() + (static_cast<std::size_t>(n) * 3 + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          s += p[i];
          s2 += p[i] * p[i];
        }
      }
      const double cnt = static_cast<double>(t.n()) * plane;
      d.norm.mean[c] = s / cnt;
      d.norm.std[c] = std::sqrt(std::max(1e-12, s2 / cnt - d.norm.mean[c] * d.norm.mean[c]));
    }
  }
  normalize_in_place(d.train.images, d.norm);
  if (d.test.size() > 0) normalize_in_place(d.test.images, d.norm);
  return d;
}

void generate_shapes(const fs::path& root, const GeneratorConfig& cfg) {
  require(cfg.num_classes == 10 || cfg.num_classes == 100, ErrorCode::kConfig,
          "generator supports 10 or 100 classes");
  require(cfg.train_per_class >= 1 && cfg.test_per_class >= 1, ErrorCode::kConfig,
          "generator needs at least one image per class and split");
  fs::create_directories(root);
  write_split(root, cfg, cfg.train_per_class, true);
  write_split(root, cfg, cfg.test_per_class, false);
  std::string names;
  static const char* kShapes[] = {"disk",    "square", "triangle", "plus",    "ring",
                                  "stripes", "cross",  "diamond",  "checker", "dots"};
  for (int c = 0; c < cfg.num_classes; ++c)
    names += std::string(kShapes[c % 10]) +
             (cfg.num_classes == 100 ? "_hue" + std::to_string(c / 10) : "") + "\n";
  write_text(root / (cfg.num_classes == 100 ? "fine_label_names.txt" : "batches.meta.txt"), names);
}

}  // namespace nrrdd
