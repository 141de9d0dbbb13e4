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

#include <memory>
#include <vector>

#include "nrrdd/model.hpp"

namespace nrrdd {

/// Stateless layer. Parameters live in ModelState, per-call data in Pass.
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x, const ModelState& st, Pass& pass) const = 0;
  virtual Tensor backward(const Tensor& gy, const ModelState& st, Pass& pass) const = 0;
};

class Conv2d final : public Module {
 public:
  Conv2d(Graph& g, int in, int out, int kernel, int stride, int pad);
  Tensor forward(const Tensor& x, const ModelState& st, Pass& pass) const override;
  Tensor backward(const Tensor& gy, const ModelState& st, Pass& pass) const override;
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

 private:
  int in_, out_, k_, stride_, pad_;
  int w_idx_;
  int slot_;
};

class BatchNorm2d final : public Module {
 public:
  BatchNorm2d(Graph& g, int channels);
  Tensor forward(const Tensor& x, const ModelState& st, Pass& pass) const override;
  Tensor backward(const Tensor& gy, const ModelState& st, Pass& pass) const override;

  static constexpr double kEps = 1e-5;

 private:
  int ch_;
  int gamma_, beta_;
  int bn_;
  int slot_;
};

class ReLU final : public Module {
 public:
  explicit ReLU(Graph& g);
  Tensor forward(const Tensor& x, const ModelState& st, Pass& pass) const override;
  Tensor backward(const Tensor& gy, const ModelState& st, Pass& pass) const override;

 private:
  int slot_;
};

/// 2x2 average pooling, stride 2.
class AvgPool2 final : public Module {
 public:
  explicit AvgPool2(Graph& g);
  Tensor forward(const Tensor& x, const ModelState& st, Pass& pass) const override;
  Tensor backward(const Tensor& gy, const ModelState& st, Pass& pass) const override;

 private:
  int slot_;
};

class Sequential final : public Module {
 public:
  void add(std::shared_ptr<const Module> m) { mods_.push_back(std::move(m)); }
  Tensor forward(const Tensor& x, const ModelState& st, Pass& pass) const override;
  Tensor backward(const Tensor& gy, const ModelState& st, Pass& pass) const override;

 private:
  std::vector<std::shared_ptr<const Module>> mods_;
};

/// conv-bn-relu-conv-bn plus (projected) shortcut, then relu.
class BasicBlock final : public Module {
 public:
  BasicBlock(Graph& g, int in, int out, int stride);
  Tensor forward(const Tensor& x, const ModelState& st, Pass& pass) const override;
  Tensor backward(const Tensor& gy, const ModelState& st, Pass& pass) const override;

 private:
  Sequential main_;
  std::shared_ptr<Sequential> shortcut_;  // null for identity
  int slot_;
};

}  // namespace nrrdd
