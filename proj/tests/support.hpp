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

// Shared fixtures for the unit and acceptance suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "nrrdd/model.hpp"
#include "nrrdd/rng.hpp"

namespace nrrdd::testing {

inline Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor t(n, c, h, w);
  for (auto& v : t.vec()) v = scale * normal(rng);
  return t;
}

/// Small randomly initialised model whose BN running statistics are
/// perturbed away from (0, 1) so eval-mode BN is not an identity.
inline ModelSnapshot tiny_model(std::uint64_t seed, int classes = 3, int hw = 8,
                                int width = 4, const std::string& arch = "convnet3") {
  ArchSpec a;
  a.arch_id = arch;
  a.width = width;
  a.num_classes = classes;
  a.input = {3, hw, hw};
  ModelSnapshot m = ModelSnapshot::create(a, seed);
  Rng rng(derive_seed(seed, {99}));
  for (auto& bn : m.state().running) {
    for (auto& v : bn.mean) v = 0.2 * normal(rng);
    for (auto& v : bn.var) v = 0.5 + uniform01(rng);
  }
  return m;
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nrrdd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace nrrdd::testing
