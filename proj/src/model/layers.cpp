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

#include "layers.hpp"

#include <Eigen/Core>
#include <cmath>

namespace nrrdd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tensor& slot(Pass& pass, int s, std::size_t i) {
  auto& v = pass.cache[s];
  if (v.size() <= i) v.resize(i + 1);
  return v[i];
}

bool want_param_grads(const Pass& pass) {
  return pass.param_grads && !pass.grads.empty();
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(Graph& g, int in, int out, int kernel, int stride, int pad)
    : in_(in), out_(out), k_(kernel), stride_(stride), pad_(pad) {
  ParamInfo w;
  w.name = "conv" + std::to_string(g.params().size()) + ".weight";
  w.n = out;
  w.c = in;
  w.h = kernel;
  w.w = kernel;
  w.fan_in = in * kernel * kernel;
  w.init = ParamInfo::Init::kKaiming;
  w.decay = true;
  w_idx_ = g.add_param(w);
  slot_ = g.add_slot();
}

Tensor Conv2d::forward(const Tensor& x, const ModelState& st, Pass& pass) const {
  require(x.c() == in_, ErrorCode::kShapeMismatch, "conv: channel mismatch");
  const int N = x.n(), H = x.h(), W = x.w();
  const int Ho = out_size(H), Wo = out_size(W);
  const int P = Ho * Wo;
  const int rows = in_ * k_ * k_;
  const long cols = static_cast<long>(N) * P;

  Tensor& dims = slot(pass, slot_, 1);
  dims = Tensor(1, 1, 1, 3);
  dims[0] = N;
  dims[1] = H;
  dims[2] = W;
  Tensor& col = slot(pass, slot_, 0);
  col = Tensor(1, 1, rows, static_cast<int>(cols));
  for (int c = 0; c < in_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        double* row = col.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * cols;
        for (int n = 0; n < N; ++n) {
          double* dst = row + static_cast<std::size_t>(n) * P;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= H) {
              std::fill(dst + oy * Wo, dst + (oy + 1) * Wo, 0.0);
              continue;
            }
            const double* src = x.data() + x.index(n, c, iy, 0);
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
            }
          }
        }
      }

  ConstMapMat wm(st.params[w_idx_].data(), out_, rows);
  ConstMapMat cm(col.data(), rows, cols);
  RowMat res = wm * cm;

  Tensor y(N, out_, Ho, Wo);
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < out_; ++o)
      std::copy(res.data() + static_cast<std::size_t>(o) * cols + static_cast<std::size_t>(n) * P,
                res.data() + static_cast<std::size_t>(o) * cols + static_cast<std::size_t>(n + 1) * P,
                y.data() + y.index(n, o, 0, 0));
  return y;
}

Tensor Conv2d::backward(const Tensor& gy, const ModelState& st, Pass& pass) const {
  const Tensor& col = pass.cache[slot_][0];
  const Tensor& dims = pass.cache[slot_][1];
  const int N = static_cast<int>(dims[0]), H = static_cast<int>(dims[1]),
            W = static_cast<int>(dims[2]);
  const int Ho = gy.h(), Wo = gy.w();
  const int P = Ho * Wo;
  const int rows = in_ * k_ * k_;
  const long cols = static_cast<long>(N) * P;

  RowMat g(out_, cols);
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < out_; ++o)
      std::copy(gy.data() + gy.index(n, o, 0, 0), gy.data() + gy.index(n, o, 0, 0) + P,
                g.data() + static_cast<std::size_t>(o) * cols + static_cast<std::size_t>(n) * P);

  ConstMapMat cm(col.data(), rows, cols);
  if (want_param_grads(pass)) {
    MapMat dw(pass.grads[w_idx_].data(), out_, rows);
    dw.noalias() += g * cm.transpose();
  }
  ConstMapMat wm(st.params[w_idx_].data(), out_, rows);
  RowMat dcol = wm.transpose() * g;

  Tensor dx(N, in_, H, W);
  for (int c = 0; c < in_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        const double* row = dcol.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * cols;
        for (int n = 0; n < N; ++n) {
          const double* src = row + static_cast<std::size_t>(n) * P;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= H) continue;
            double* dst = dx.data() + dx.index(n, c, iy, 0);
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < W) dst[ix] += src[oy * Wo + ox];
            }
          }
        }
      }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(Graph& g, int channels) : ch_(channels) {
  const std::string base = "bn" + std::to_string(g.bn_channels().size());
  ParamInfo gi;
  gi.name = base + ".weight";
  gi.n = 1;
  gi.c = channels;
  gi.init = ParamInfo::Init::kOnes;
  gamma_ = g.add_param(gi);
  ParamInfo bi;
  bi.name = base + ".bias";
  bi.n = 1;
  bi.c = channels;
  bi.init = ParamInfo::Init::kZeros;
  beta_ = g.add_param(bi);
  bn_ = g.add_bn(channels);
  slot_ = g.add_slot();
}

Tensor BatchNorm2d::forward(const Tensor& x, const ModelState& st, Pass& pass) const {
  require(x.c() == ch_, ErrorCode::kShapeMismatch, "batchnorm: channel mismatch");
  const int N = x.n();
  const std::size_t HW = static_cast<std::size_t>(x.h()) * x.w();
  const double M = static_cast<double>(N) * HW;

  BnStats batch;
  batch.mean.assign(ch_, 0.0);
  batch.var.assign(ch_, 0.0);
  for (int c = 0; c < ch_; ++c) {
    double s = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* p = x.data() + x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) s += p[i];
    }
    const double mu = s / M;
    double v = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* p = x.data() + x.index(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) v += (p[i] - mu) * (p[i] - mu);
    }
    batch.mean[c] = mu;
    batch.var[c] = v / M;
  }

  const BnStats& use = pass.train ? batch : st.running[bn_];
  const Tensor& gamma = st.params[gamma_];
  const Tensor& beta = st.params[beta_];
  Tensor y(x.n(), x.c(), x.h(), x.w());
  for (int c = 0; c < ch_; ++c) {
    const double inv = 1.0 / std::sqrt(use.var[c] + kEps);
    const double a = gamma[c] * inv;
    const double b = beta[c] - use.mean[c] * a;
    for (int n = 0; n < N; ++n) {
      const double* p = x.data() + x.index(n, c, 0, 0);
      double* q = y.data() + y.index(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) q[i] = a * p[i] + b;
    }
  }
  slot(pass, slot_, 0) = x;
  pass.batch_bn[bn_] = std::move(batch);
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy, const ModelState& st, Pass& pass) const {
  const Tensor& x = pass.cache[slot_][0];
  const BnStats& batch = pass.batch_bn[bn_];
  const BnStats& use = pass.train ? batch : st.running[bn_];
  const Tensor& gamma = st.params[gamma_];
  const int N = x.n();
  const std::size_t HW = static_cast<std::size_t>(x.h()) * x.w();
  const double M = static_cast<double>(N) * HW;
  const bool stat_grad = pass.bn_grad.size() > static_cast<std::size_t>(bn_) &&
                         !pass.bn_grad[bn_].mean.empty();

  Tensor dx(x.n(), x.c(), x.h(), x.w());
  for (int c = 0; c < ch_; ++c) {
    const double inv = 1.0 / std::sqrt(use.var[c] + kEps);
    const double mu = use.mean[c];
    double sum_g = 0.0, sum_gx = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* p = x.data() + x.index(n, c, 0, 0);
      const double* g = gy.data() + gy.index(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * (p[i] - mu) * inv;
      }
    }
    if (want_param_grads(pass)) {
      pass.grads[gamma_][c] += sum_gx;
      pass.grads[beta_][c] += sum_g;
    }
    const double a = gamma[c] * inv;
    const double dmu = stat_grad ? pass.bn_grad[bn_].mean[c] / M : 0.0;
    const double dvar = stat_grad ? 2.0 * pass.bn_grad[bn_].var[c] / M : 0.0;
    const double bmu = batch.mean[c];
    for (int n = 0; n < N; ++n) {
      const double* p = x.data() + x.index(n, c, 0, 0);
      const double* g = gy.data() + gy.index(n, c, 0, 0);
      double* d = dx.data() + dx.index(n, c, 0, 0);
      for (std::size_t i = 0; i < HW; ++i) {
        double v;
        if (pass.train) {
          const double xhat = (p[i] - mu) * inv;
          v = a / M * (M * g[i] - sum_g - xhat * sum_gx);
        } else {
          v = a * g[i];
        }
        if (stat_grad) v += dmu + dvar * (p[i] - bmu);
        d[i] = v;
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ ReLU

ReLU::ReLU(Graph& g) : slot_(g.add_slot()) {}

Tensor ReLU::forward(const Tensor& x, const ModelState&, Pass& pass) const {
  Tensor y = x;
  for (auto& v : y.vec()) v = v > 0.0 ? v : 0.0;
  slot(pass, slot_, 0) = y;
  return y;
}

Tensor ReLU::backward(const Tensor& gy, const ModelState&, Pass& pass) const {
  const Tensor& y = pass.cache[slot_][0];
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(y[i] > 0.0)) dx[i] = 0.0;
  return dx;
}

// -------------------------------------------------------------- AvgPool2

AvgPool2::AvgPool2(Graph& g) : slot_(g.add_slot()) {}

Tensor AvgPool2::forward(const Tensor& x, const ModelState&, Pass& pass) const {
  const int Ho = x.h() / 2, Wo = x.w() / 2;
  Tensor y(x.n(), x.c(), Ho, Wo);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
          y.at(n, c, oy, ox) = 0.25 * (x.at(n, c, 2 * oy, 2 * ox) + x.at(n, c, 2 * oy, 2 * ox + 1) +
                                       x.at(n, c, 2 * oy + 1, 2 * ox) +
                                       x.at(n, c, 2 * oy + 1, 2 * ox + 1));
  Tensor& dims = slot(pass, slot_, 0);
  dims = Tensor(1, 1, 1, 2);
  dims[0] = x.h();
  dims[1] = x.w();
  return y;
}

Tensor AvgPool2::backward(const Tensor& gy, const ModelState&, Pass& pass) const {
  const Tensor& dims = pass.cache[slot_][0];
  Tensor dx(gy.n(), gy.c(), static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  for (int n = 0; n < gy.n(); ++n)
    for (int c = 0; c < gy.c(); ++c)
      for (int oy = 0; oy < gy.h(); ++oy)
        for (int ox = 0; ox < gy.w(); ++ox) {
          const double g = 0.25 * gy.at(n, c, oy, ox);
          dx.at(n, c, 2 * oy, 2 * ox) = g;
          dx.at(n, c, 2 * oy, 2 * ox + 1) = g;
          dx.at(n, c, 2 * oy + 1, 2 * ox) = g;
          dx.at(n, c, 2 * oy + 1, 2 * ox + 1) = g;
        }
  return dx;
}

// ------------------------------------------------------------ Sequential

Tensor Sequential::forward(const Tensor& x, const ModelState& st, Pass& pass) const {
  Tensor h = x;
  for (const auto& m : mods_) h = m->forward(h, st, pass);
  return h;
}

Tensor Sequential::backward(const Tensor& gy, const ModelState& st, Pass& pass) const {
  Tensor g = gy;
  for (auto it = mods_.rbegin(); it != mods_.rend(); ++it) g = (*it)->backward(g, st, pass);
  return g;
}

// ------------------------------------------------------------ BasicBlock

BasicBlock::BasicBlock(Graph& g, int in, int out, int stride) {
  main_.add(std::make_shared<Conv2d>(g, in, out, 3, stride, 1));
  main_.add(std::make_shared<BatchNorm2d>(g, out));
  main_.add(std::make_shared<ReLU>(g));
  main_.add(std::make_shared<Conv2d>(g, out, out, 3, 1, 1));
  main_.add(std::make_shared<BatchNorm2d>(g, out));
  if (stride != 1 || in != out) {
    shortcut_ = std::make_shared<Sequential>();
    shortcut_->add(std::make_shared<Conv2d>(g, in, out, 1, stride, 0));
    shortcut_->add(std::make_shared<BatchNorm2d>(g, out));
  }
  slot_ = g.add_slot();
}

Tensor BasicBlock::forward(const Tensor& x, const ModelState& st, Pass& pass) const {
  Tensor h = main_.forward(x, st, pass);
  const Tensor s = shortcut_ ? shortcut_->forward(x, st, pass) : x;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double v = h[i] + s[i];
    h[i] = v > 0.0 ? v : 0.0;
  }
  slot(pass, slot_, 0) = h;
  return h;
}

Tensor BasicBlock::backward(const Tensor& gy, const ModelState& st, Pass& pass) const {
  const Tensor& y = pass.cache[slot_][0];
  Tensor g = gy;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(y[i] > 0.0)) g[i] = 0.0;
  Tensor dx = main_.backward(g, st, pass);
  if (shortcut_) {
    const Tensor ds = shortcut_->backward(g, st, pass);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
  } else {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i];
  }
  return dx;
}

}  // namespace nrrdd
