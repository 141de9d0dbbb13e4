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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nrrdd/model.hpp"
#include "nrrdd/train.hpp"

namespace nrrdd {

/// Which images of an on-disk archive form the working set.
struct DatasetSpec {
  std::filesystem::path root;
  std::vector<int> classes;  // original class ids; empty = all
  int train_per_class = 500;
  int test_per_class = 100;
  int resize = 0;  // square side after loading, 0 = native
};

/// Undecoded split of a CIFAR-format binary archive (CHW uint8 per image).
struct RawSplit {
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  int num_classes = 0;
  int size = 32;

  int count() const { return static_cast<int>(labels.size()); }
};

/// Reads `data_batch_*.bin` / `test_batch.bin` (10 classes) or
/// `train.bin` / `test.bin` (100 classes, fine labels).
RawSplit read_cifar_split(const std::filesystem::path& root, bool train);

struct DeskData {
  LabeledSet train;
  LabeledSet test;
  Normalization norm;
  std::vector<int> class_ids;  // original id of each remapped label
};

/// Loads the subset, resizes, and normalises with `norm` or, when null,
/// with the per-channel statistics of the selected training images.
DeskData load_desk_data(const DatasetSpec& spec, const Normalization* norm = nullptr);

/// NRRDD_DATA_ROOT wins over the configured root when set.
std::filesystem::path resolve_data_root(const std::filesystem::path& configured);

struct GeneratorConfig {
  int num_classes = 10;  // 10 or 100
  int train_per_class = 1000;
  int test_per_class = 200;
  std::uint64_t seed = 0;
};

/// Writes a procedural 32x32 RGB shape-recognition archive in CIFAR binary
/// layout. Class c draws shape c % 10; with 100 classes c / 10 also fixes
/// the foreground hue band.
void generate_shapes(const std::filesystem::path& root, const GeneratorConfig& cfg);

}  // namespace nrrdd
