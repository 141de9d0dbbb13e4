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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <json.hpp>

#include "layers.hpp"
#include "nrrdd/binio.hpp"
#include "nrrdd/model.hpp"
#include "nrrdd/rng.hpp"

namespace nrrdd {

namespace {

constexpr char kSnapshotMagic[4] = {'N', 'R', 'S', 'N'};
constexpr std::uint16_t kSnapshotVersion = 1;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapMat = Eigen::Map<RowMat>;

}  // namespace

// ------------------------------------------------------------------ Graph

int Graph::add_param(ParamInfo info) {
  params_.push_back(std::move(info));
  return static_cast<int>(params_.size()) - 1;
}

int Graph::add_bn(int channels) {
  bn_channels_.push_back(channels);
  return static_cast<int>(bn_channels_.size()) - 1;
}

std::shared_ptr<const Graph> Graph::build(const ArchSpec& arch) {
  require(arch.num_classes >= 1, ErrorCode::kInvalidArgument, "num_classes must be >= 1");
  require(arch.width >= 1, ErrorCode::kInvalidArgument, "width must be >= 1");
  require(arch.input.channels >= 1, ErrorCode::kInvalidArgument, "input needs channels");

  auto g = std::make_shared<Graph>();
  g->arch_ = arch;
  auto body = std::make_shared<Sequential>();
  const int w = arch.width;
  if (arch.arch_id == "convnet3" || arch.arch_id == "convnet3_nobn") {
    const bool bn = arch.arch_id == "convnet3";
    require(arch.input.height % 4 == 0 && arch.input.width % 4 == 0 && arch.input.height >= 4,
            ErrorCode::kInvalidArgument, "convnet3 needs input sides divisible by 4");
    int in = arch.input.channels;
    for (int block = 0; block < 3; ++block) {
      body->add(std::make_shared<Conv2d>(*g, in, w, 3, 1, 1));
      if (bn) body->add(std::make_shared<BatchNorm2d>(*g, w));
      body->add(std::make_shared<ReLU>(*g));
      if (block < 2) body->add(std::make_shared<AvgPool2>(*g));
      in = w;
    }
    g->feature_channels_ = w;
    g->feature_h_ = arch.input.height / 4;
    g->feature_w_ = arch.input.width / 4;
  } else if (arch.arch_id == "resnet18") {
    require(arch.input.height % 8 == 0 && arch.input.width % 8 == 0 && arch.input.height >= 8,
            ErrorCode::kInvalidArgument, "resnet18 needs input sides divisible by 8");
    body->add(std::make_shared<Conv2d>(*g, arch.input.channels, w, 3, 1, 1));
    body->add(std::make_shared<BatchNorm2d>(*g, w));
    body->add(std::make_shared<ReLU>(*g));
    int in = w;
    const int widths[4] = {w, 2 * w, 4 * w, 8 * w};
    for (int stage = 0; stage < 4; ++stage) {
      const int stride = stage == 0 ? 1 : 2;
      body->add(std::make_shared<BasicBlock>(*g, in, widths[stage], stride));
      body->add(std::make_shared<BasicBlock>(*g, widths[stage], widths[stage], 1));
      in = widths[stage];
    }
    g->feature_channels_ = 8 * w;
    g->feature_h_ = arch.input.height / 8;
    g->feature_w_ = arch.input.width / 8;
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown architecture '" + arch.arch_id + "'");
  }

  ParamInfo hw;
  hw.name = "head.weight";
  hw.n = arch.num_classes;
  hw.c = g->feature_channels_;
  hw.fan_in = g->feature_channels_;
  hw.init = ParamInfo::Init::kUniformFanIn;
  hw.decay = true;
  g->head_w_ = g->add_param(hw);
  ParamInfo hb;
  hb.name = "head.bias";
  hb.n = arch.num_classes;
  hb.c = 1;
  hb.init = ParamInfo::Init::kZeros;
  g->head_b_ = g->add_param(hb);
  g->head_slot_ = g->add_slot();
  g->body_ = body;
  return g;
}

// ---------------------------------------------------------- ModelSnapshot

ModelSnapshot ModelSnapshot::create(const ArchSpec& arch, std::uint64_t seed,
                                    Normalization norm) {
  ModelSnapshot m;
  m.graph_ = Graph::build(arch);
  if (norm.mean.empty()) {
    norm.mean.assign(arch.input.channels, 0.0);
    norm.std.assign(arch.input.channels, 1.0);
  }
  require(static_cast<int>(norm.mean.size()) == arch.input.channels &&
              norm.std.size() == norm.mean.size(),
          ErrorCode::kInvalidArgument, "normalization size must match channels");
  m.norm = std::move(norm);
  m.meta.seed = seed;

  Rng rng(derive_seed(seed, {0x1417}));
  for (const ParamInfo& p : m.graph_->params()) {
    Tensor t(p.n, p.c, p.h, p.w);
    switch (p.init) {
      case ParamInfo::Init::kKaiming: {
        const double sd = std::sqrt(2.0 / p.fan_in);
        for (auto& v : t.vec()) v = sd * normal(rng);
        break;
      }
      case ParamInfo::Init::kUniformFanIn: {
        const double b = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
        for (auto& v : t.vec()) v = uniform(rng, -b, b);
        break;
      }
      case ParamInfo::Init::kOnes:
        t.fill(1.0);
        break;
      case ParamInfo::Init::kZeros:
        break;
    }
    m.state_.params.push_back(std::move(t));
  }
  for (int ch : m.graph_->bn_channels())
    m.state_.running.push_back({std::vector<double>(ch, 0.0), std::vector<double>(ch, 1.0)});
  return m;
}

std::vector<std::uint8_t> ModelSnapshot::serialize() const {
  using nlohmann::json;
  json h;
  h["arch_id"] = arch().arch_id;
  h["width"] = arch().width;
  h["num_classes"] = arch().num_classes;
  h["input_shape"] = {arch().input.channels, arch().input.height, arch().input.width};
  h["norm_mean"] = norm.mean;
  h["norm_std"] = norm.std;
  h["meta"] = {{"seed", meta.seed},
               {"test_accuracy", meta.test_accuracy},
               {"train_accuracy", meta.train_accuracy},
               {"epochs", meta.epochs},
               {"note", meta.note}};
  json tensors = json::array();
  for (const ParamInfo& p : graph_->params())
    tensors.push_back({{"name", p.name}, {"shape", {p.n, p.c, p.h, p.w}}});
  h["tensors"] = tensors;
  h["bn_channels"] = graph_->bn_channels();
  const std::string header = h.dump();

  ByteWriter w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kSnapshotMagic), 4});
  w.put(kSnapshotVersion);
  w.put(static_cast<std::uint32_t>(header.size()));
  w.put_string(header);
  for (const Tensor& t : state_.params)
    for (double v : t.vec()) w.put(v);
  for (const BnStats& s : state_.running) {
    for (double v : s.mean) w.put(v);
    for (double v : s.var) w.put(v);
  }
  seal_with_crc(w);
  return std::move(w.bytes());
}

ModelSnapshot ModelSnapshot::deserialize(std::span<const std::uint8_t> bytes) {
  using nlohmann::json;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kSnapshotMagic, 4) != 0)
    fail(ErrorCode::kCorrupt, "not a model snapshot (bad magic)");
  auto payload = check_crc(bytes);
  ByteReader r(payload);
  r.get_bytes(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kSnapshotVersion)
    fail(ErrorCode::kVersionMismatch,
         "snapshot version " + std::to_string(version) + " unsupported");
  const auto hlen = r.get<std::uint32_t>();
  json h;
  try {
    h = json::parse(r.get_string(hlen));
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("snapshot header: ") + e.what());
  }
  ArchSpec arch;
  arch.arch_id = h.at("arch_id").get<std::string>();
  arch.width = h.at("width").get<int>();
  arch.num_classes = h.at("num_classes").get<int>();
  const auto shape = h.at("input_shape").get<std::vector<int>>();
  require(shape.size() == 3, ErrorCode::kCorrupt, "snapshot input_shape");
  arch.input = {shape[0], shape[1], shape[2]};

  ModelSnapshot m;
  m.graph_ = Graph::build(arch);
  m.norm.mean = h.at("norm_mean").get<std::vector<double>>();
  m.norm.std = h.at("norm_std").get<std::vector<double>>();
  const json& meta = h.at("meta");
  m.meta.seed = meta.at("seed").get<std::uint64_t>();
  m.meta.test_accuracy = meta.at("test_accuracy").get<double>();
  m.meta.train_accuracy = meta.at("train_accuracy").get<double>();
  m.meta.epochs = meta.at("epochs").get<int>();
  m.meta.note = meta.at("note").get<std::string>();

  const json& tensors = h.at("tensors");
  require(tensors.size() == m.graph_->params().size(), ErrorCode::kCorrupt,
          "snapshot tensor count does not match architecture");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const ParamInfo& p = m.graph_->params()[i];
    const auto s = tensors[i].at("shape").get<std::vector<int>>();
    require(s == std::vector<int>{p.n, p.c, p.h, p.w}, ErrorCode::kCorrupt,
            "snapshot tensor shape mismatch for " + p.name);
    Tensor t(p.n, p.c, p.h, p.w);
    for (auto& v : t.vec()) v = r.get<double>();
    m.state_.params.push_back(std::move(t));
  }
  for (int ch : m.graph_->bn_channels()) {
    BnStats s;
    s.mean.resize(ch);
    s.var.resize(ch);
    for (auto& v : s.mean) v = r.get<double>();
    for (auto& v : s.var) v = r.get<double>();
    m.state_.running.push_back(std::move(s));
  }
  require(r.remaining() == 0, ErrorCode::kCorrupt, "trailing bytes in snapshot");
  return m;
}

void ModelSnapshot::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

ModelSnapshot ModelSnapshot::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

// ------------------------------------------------------------- evaluation

Tensor softmax(const Tensor& logits) {
  Tensor p(logits.n(), logits.c(), 1, 1);
  const int K = logits.c();
  for (int i = 0; i < logits.n(); ++i) {
    const double* z = logits.data() + static_cast<std::size_t>(i) * K;
    double* q = p.data() + static_cast<std::size_t>(i) * K;
    const double mx = *std::max_element(z, z + K);
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += (q[k] = std::exp(z[k] - mx));
    for (int k = 0; k < K; ++k) q[k] /= s;
  }
  return p;
}

ForwardTrace forward_pass(const ModelSnapshot& model, const Tensor& batch, Pass& pass) {
  const Graph& g = model.graph();
  require(batch.n() >= 1 && batch.image_shape() == model.input_shape(),
          ErrorCode::kShapeMismatch,
          "batch shape " + shape_string(batch) + " does not match model input");
  pass.cache.assign(g.slots(), {});
  pass.batch_bn.assign(g.bn_channels().size(), {});
  if (pass.param_grads) {
    pass.grads.clear();
    for (const Tensor& t : model.state().params)
      pass.grads.emplace_back(t.n(), t.c(), t.h(), t.w());
  }

  Tensor feat = g.body().forward(batch, model.state(), pass);
  const int N = feat.n(), F = feat.c();
  const std::size_t HW = static_cast<std::size_t>(feat.h()) * feat.w();
  Tensor pooled(N, F, 1, 1);
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f) {
      const double* p = feat.data() + feat.index(n, f, 0, 0);
      double s = 0.0;
      for (std::size_t i = 0; i < HW; ++i) s += p[i];
      pooled.at(n, f, 0, 0) = s / static_cast<double>(HW);
    }

  const int K = model.num_classes();
  ConstMapMat wm(model.state().params[g.head_weight()].data(), K, F);
  ConstMapMat pm(pooled.data(), N, F);
  Tensor logits(N, K, 1, 1);
  MapMat lm(logits.data(), N, K);
  lm.noalias() = pm * wm.transpose();
  const Tensor& bias = model.state().params[g.head_bias()];
  for (int n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k) logits.at(n, k, 0, 0) += bias[k];

  pass.cache[g.head_slot()] = {pooled, Tensor(1, 1, static_cast<int>(feat.h()), feat.w())};
  pass.features = feat;

  ForwardTrace t;
  t.probs = softmax(logits);
  t.logits = std::move(logits);
  t.features = std::move(feat);
  t.batch_bn = pass.batch_bn;
  return t;
}

Tensor backward_pass(const ModelSnapshot& model, const TraceGrad& grad, Pass& pass) {
  const Graph& g = model.graph();
  const Tensor& pooled = pass.cache[g.head_slot()][0];
  const Tensor& fdims = pass.cache[g.head_slot()][1];
  const int N = pooled.n(), F = pooled.c(), K = model.num_classes();
  require(grad.d_logits.n() == N && grad.d_logits.c() == K, ErrorCode::kShapeMismatch,
          "d_logits shape mismatch");

  ConstMapMat dl(grad.d_logits.data(), N, K);
  ConstMapMat pm(pooled.data(), N, F);
  if (pass.param_grads && !pass.grads.empty()) {
    MapMat dw(pass.grads[g.head_weight()].data(), K, F);
    dw.noalias() += dl.transpose() * pm;
    Tensor& db = pass.grads[g.head_bias()];
    for (int n = 0; n < N; ++n)
      for (int k = 0; k < K; ++k) db[k] += grad.d_logits.at(n, k, 0, 0);
  }
  ConstMapMat wm(model.state().params[g.head_weight()].data(), K, F);
  RowMat dpool = dl * wm;

  const int fh = fdims.h(), fw = fdims.w();
  const double inv = 1.0 / (static_cast<double>(fh) * fw);
  Tensor dfeat(N, F, fh, fw);
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f) {
      const double v = dpool(n, f) * inv;
      double* p = dfeat.data() + dfeat.index(n, f, 0, 0);
      std::fill(p, p + static_cast<std::size_t>(fh) * fw, v);
    }

  if (!grad.d_bn.empty()) {
    require(grad.d_bn.size() == g.bn_channels().size(), ErrorCode::kShapeMismatch,
            "d_bn must have one entry per BatchNorm layer");
    pass.bn_grad = grad.d_bn;
  } else {
    pass.bn_grad.clear();
  }
  return g.body().backward(dfeat, model.state(), pass);
}

ForwardTrace forward(const ModelSnapshot& model, const Tensor& batch) {
  Pass pass;
  return forward_pass(model, batch, pass);
}

double confidence(const ModelSnapshot& model, const Tensor& image) {
  const ForwardTrace t = forward(model, image.n() == 1 ? image : image.image(0));
  double best = 0.0;
  for (int k = 0; k < t.classes(); ++k) best = std::max(best, t.prob(0, k));
  return best;
}

InputGradient input_gradient(const ModelSnapshot& model, const Tensor& batch,
                             const TraceLoss& loss) {
  Pass pass;
  InputGradient out;
  out.trace = forward_pass(model, batch, pass);
  out.loss = loss.value(out.trace);
  const TraceGrad g = loss.gradient(out.trace);
  out.grad = backward_pass(model, g, pass);
  return out;
}

void update_running_stats(ModelSnapshot& model, const Pass& pass, double momentum) {
  auto& running = model.state().running;
  require(pass.batch_bn.size() == running.size(), ErrorCode::kInternal,
          "pass has no batch statistics");
  for (std::size_t l = 0; l < running.size(); ++l) {
    const BnStats& b = pass.batch_bn[l];
    for (std::size_t c = 0; c < b.mean.size(); ++c) {
      running[l].mean[c] = (1.0 - momentum) * running[l].mean[c] + momentum * b.mean[c];
      running[l].var[c] = (1.0 - momentum) * running[l].var[c] + momentum * b.var[c];
    }
  }
}

}  // namespace nrrdd
