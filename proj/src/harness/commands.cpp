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
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "nrrdd/binio.hpp"
#include "nrrdd/harness.hpp"
#include "nrrdd/imageops.hpp"

namespace nrrdd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kTeacherKeys = {"data.", "teacher."};
const std::vector<std::string> kDistillKeys = {"data.", "teacher.", "seed", "ipc", "beta", "cidd.",
                                               "refine.", "mix", "same_class_partner",
                                               "label.pairs"};
const std::vector<std::string> kRunKeys = {"data.", "teacher.", "seed", "ipc", "beta", "cidd.",
                                           "refine.", "mix", "same_class_partner", "label.",
                                           "student.", "transfer."};

constexpr const char* kDefaults = R"(experiment = default
out = runs/default
seed = 0
data.root = data/shapes10
data.classes =
data.train_per_class = 500
data.test_per_class = 100
data.resize = 16
teacher.arch = convnet3
teacher.width = 32
teacher.epochs = 30
teacher.batch = 64
teacher.lr = 0.002
teacher.weight_decay = 0.0005
teacher.warmup_epochs = 1
teacher.augment = true
teacher.seed = 0
ipc = 10
beta = 1
cidd.init = cidd
cidd.k = 30
cidd.t = 2
cidd.scale_lo = 0.25
cidd.scale_hi = 1
cidd.selection = lowest
cidd.images_per_class = 0
refine.skip = false
refine.iterations = 2000
refine.lr = 0.05
refine.beta1 = 0.5
refine.beta2 = 0.9
refine.batch = 100
refine.alpha_bn = 10
refine.alpha_lr = 1
refine.r = 0.4
refine.epsilon = 0.5
refine.optimizer = adam
refine.full_mask = false
mix = cutmix
same_class_partner = false
label.mode = dbr
label.pairs = 1
student.arch = convnet3
student.width = 32
transfer.epochs = 300
transfer.lr = 0.001
transfer.batch = 100
transfer.alpha_dbr = 1
transfer.r = 0.4
transfer.weight_decay = 0.01
transfer.warmup_epochs = 5
transfer.schedule = cosine
transfer.extra_aug = false
transfer.extra_aug_dbr = false
transfer.eval_every = 0
sweep.key =
sweep.value =
)";

void say(const CommandOptions& opt, const std::string& msg) {
  if (opt.log) *opt.log << msg << "\n" << std::flush;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream f(path, std::ios::app);
  require(f.good(), ErrorCode::kIo, "cannot append to " + path.string());
  f << line << "\n";
}

// Writes through a temporary file so readers never see a partial artifact.
void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  write_file(tmp, bytes);
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_atomic(path, {text.begin(), text.end()});
}

double median(std::vector<double> v) {
  if (v.empty()) return kUnset;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_or_unset(const json& j) { return j.is_null() ? kUnset : j.get<double>(); }

DeskData load_data_for(const ExperimentConfig& cfg, const Normalization& norm, bool with_test) {
  DatasetSpec spec = cfg.data;
  spec.root = resolve_data_root(spec.root);
  if (!with_test) spec.test_per_class = 0;
  return load_desk_data(spec, &norm);
}

ModelSnapshot load_teacher(const ExperimentConfig& cfg) {
  const fs::path p = cfg.teacher_dir() / "model.nrrm";
  require(fs::exists(p), ErrorCode::kMissingArtifact,
          "teacher snapshot " + p.string() + " not found; run `train-teacher` first");
  return ModelSnapshot::load(p);
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return 2;
    case ErrorCode::kMissingArtifact: return 3;
    default: return 1;
  }
}

// ------------------------------------------------------------------ config

KeyValueConfig ExperimentConfig::defaults() { return KeyValueConfig::parse(kDefaults, "<defaults>"); }

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& user) {
  ExperimentConfig c;
  c.kv = defaults();
  for (const auto& [k, v] : user.entries()) {
    require(c.kv.has(k), ErrorCode::kConfig, "unknown config key '" + k + "'");
    c.kv.set(k, v);
  }
  const KeyValueConfig& kv = c.kv;
  c.experiment = kv.get("experiment");
  c.out = kv.get("out");
  c.seed = kv.get_u64("seed");

  c.data.root = kv.get("data.root");
  c.data.classes = kv.get_int_list("data.classes");
  c.data.train_per_class = kv.get_int("data.train_per_class");
  c.data.test_per_class = kv.get_int("data.test_per_class");
  c.data.resize = kv.get_int("data.resize");

  c.teacher.arch_id = kv.get("teacher.arch");
  c.teacher.width = kv.get_int("teacher.width");
  c.teacher.epochs = kv.get_int("teacher.epochs");
  c.teacher.batch = kv.get_int("teacher.batch");
  c.teacher.lr = kv.get_double("teacher.lr");
  c.teacher.weight_decay = kv.get_double("teacher.weight_decay");
  c.teacher.warmup_epochs = kv.get_int("teacher.warmup_epochs");
  c.teacher.augment = kv.get_bool("teacher.augment");
  c.teacher_seed = kv.get_u64("teacher.seed");

  c.init = kv.get("cidd.init");
  require(c.init == "cidd" || c.init == "random_real", ErrorCode::kConfig,
          "cidd.init must be 'cidd' or 'random_real'");
  c.cidd.ipc = kv.get_int("ipc");
  c.cidd.beta = kv.get_int("beta");
  c.cidd.k = kv.get_int("cidd.k");
  c.cidd.t = kv.get_int("cidd.t");
  c.cidd.scale_lo = kv.get_double("cidd.scale_lo");
  c.cidd.scale_hi = kv.get_double("cidd.scale_hi");
  c.cidd.selection = parse_selection(kv.get("cidd.selection"));
  c.cidd.images_per_class = kv.get_int("cidd.images_per_class");
  require(c.cidd.ipc >= 1, ErrorCode::kConfig, "ipc must be >= 1");
  try {
    grid_side(c.cidd.beta);
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  require(!(c.init == "random_real" && c.cidd.beta != 1), ErrorCode::kConfig,
          "cidd.init = random_real uses whole images; beta must be 1");

  c.skip_nrr = kv.get_bool("refine.skip");
  c.refine.iterations = kv.get_int("refine.iterations");
  c.refine.lr = kv.get_double("refine.lr");
  c.refine.beta1 = kv.get_double("refine.beta1");
  c.refine.beta2 = kv.get_double("refine.beta2");
  c.refine.batch = kv.get_int("refine.batch");
  c.refine.alpha_bn = kv.get_double("refine.alpha_bn");
  c.refine.alpha_lr = kv.get_double("refine.alpha_lr");
  c.refine.r = kv.get_double("refine.r");
  c.refine.epsilon = kv.get_double("refine.epsilon");
  c.refine.optimizer = kv.get("refine.optimizer");
  c.refine.full_mask = kv.get_bool("refine.full_mask");
  c.refine.mix = parse_mix_method(kv.get("mix"));
  c.refine.same_class_partner = kv.get_bool("same_class_partner");
  c.refine.seed = derive_seed(c.seed, {2});
  require(c.refine.iterations >= 0, ErrorCode::kConfig, "refine.iterations must be >= 0");
  require(c.refine.epsilon > 0.0 && c.refine.epsilon < 1.0, ErrorCode::kConfig,
          "refine.epsilon must lie in (0, 1)");
  require(c.refine.optimizer == "adam" || c.refine.optimizer == "sgd", ErrorCode::kConfig,
          "refine.optimizer must be 'adam' or 'sgd'");

  c.relabel.mode = parse_label_mode(kv.get("label.mode"));
  c.relabel.pairs_per_image = kv.get_int("label.pairs");
  c.relabel.allow_unrefined = c.skip_nrr;
  c.relabel.mix = c.refine.mix;
  c.relabel.same_class_partner = c.refine.same_class_partner;
  c.relabel.seed = derive_seed(c.seed, {3});
  require(c.relabel.pairs_per_image >= 1, ErrorCode::kConfig, "label.pairs must be >= 1");

  c.transfer.arch_id = kv.get("student.arch");
  c.transfer.width = kv.get_int("student.width");
  c.transfer.epochs = kv.get_int("transfer.epochs");
  c.transfer.lr = kv.get_double("transfer.lr");
  c.transfer.batch = kv.get_int("transfer.batch");
  c.transfer.alpha_dbr = kv.get_double("transfer.alpha_dbr");
  c.transfer.r = kv.get_double("transfer.r");
  c.transfer.weight_decay = kv.get_double("transfer.weight_decay");
  c.transfer.warmup_epochs = kv.get_int("transfer.warmup_epochs");
  c.transfer.schedule = kv.get("transfer.schedule");
  c.transfer.extra_aug = kv.get_bool("transfer.extra_aug");
  c.transfer.extra_aug_dbr = kv.get_bool("transfer.extra_aug_dbr");
  c.transfer.eval_every = kv.get_int("transfer.eval_every");
  c.transfer.seed = derive_seed(c.seed, {4});
  require(c.transfer.schedule == "cosine" || c.transfer.schedule == "constant", ErrorCode::kConfig,
          "transfer.schedule must be 'cosine' or 'constant'");
  require(c.transfer.epochs >= 0 && c.transfer.batch >= 2, ErrorCode::kConfig,
          "transfer needs epochs >= 0 and batch >= 2");
  return c;
}

fs::path ExperimentConfig::teacher_dir() const {
  return out / ("teacher-" + kv.select(kTeacherKeys).digest());
}
fs::path ExperimentConfig::distill_dir() const {
  return out / ("distill-" + kv.select(kDistillKeys).digest());
}
fs::path ExperimentConfig::store_path() const {
  return distill_dir() / ("store-" + to_string(relabel.mode) + ".nrrd");
}
fs::path ExperimentConfig::student_dir() const { return out / "students" / run_id(); }
fs::path ExperimentConfig::results_path() const { return out / "results.jsonl"; }
std::string ExperimentConfig::run_id() const { return kv.select(kRunKeys).digest(); }

// ----------------------------------------------------------------- results

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {
      "experiment", "run_id",     "mode",      "init",        "ipc",
      "beta",       "seed",       "nrr",       "alpha_bn",    "alpha_lr",
      "epsilon",    "r",          "pairs",     "records",     "store_bytes",
      "label_bytes", "teacher_accuracy", "accuracy", "sweep_key", "sweep_value"};
  return cols;
}

std::string to_json_line(const ResultRow& row) {
  json j = json::object();
  j["experiment"] = row.experiment;
  j["run_id"] = row.run_id;
  j["mode"] = row.mode;
  j["init"] = row.init;
  j["ipc"] = row.ipc;
  j["beta"] = row.beta;
  j["seed"] = row.seed;
  j["nrr"] = row.nrr;
  j["alpha_bn"] = row.alpha_bn;
  j["alpha_lr"] = row.alpha_lr;
  j["epsilon"] = row.epsilon;
  j["r"] = row.r;
  j["pairs"] = row.pairs;
  j["records"] = row.records;
  j["store_bytes"] = row.store_bytes;
  j["label_bytes"] = row.label_bytes;
  j["teacher_accuracy"] = row.teacher_accuracy;
  j["accuracy"] = row.accuracy;
  j["sweep_key"] = row.sweep_key;
  j["sweep_value"] = row.sweep_value;
  return j.dump();
}

ResultRow parse_result_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("bad result line: ") + e.what());
  }
  ResultRow r;
  try {
    r.experiment = j.at("experiment");
    r.run_id = j.at("run_id");
    r.mode = j.at("mode");
    r.init = j.at("init");
    r.ipc = j.at("ipc");
    r.beta = j.at("beta");
    r.seed = j.at("seed");
    r.nrr = j.at("nrr");
    r.alpha_bn = j.at("alpha_bn");
    r.alpha_lr = j.at("alpha_lr");
    r.epsilon = j.at("epsilon");
    r.r = j.at("r");
    r.pairs = j.at("pairs");
    r.records = j.at("records");
    r.store_bytes = j.at("store_bytes");
    r.label_bytes = j.at("label_bytes");
    r.teacher_accuracy = j.at("teacher_accuracy");
    r.accuracy = j.at("accuracy");
    r.sweep_key = j.at("sweep_key");
    r.sweep_value = j.at("sweep_value");
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorrupt, std::string("result line misses a column: ") + e.what());
  }
  return r;
}

std::vector<ResultRow> read_results(const fs::path& path) {
  std::vector<ResultRow> rows;
  if (!fs::exists(path)) return rows;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_result_line(line));
  return rows;
}

// ---------------------------------------------------------------- manifest

void save_manifest(const fs::path& dir, const std::vector<SyntheticRecord>& records,
                   const ExperimentConfig& cfg, const Normalization& norm) {
  require(!records.empty(), ErrorCode::kInvalidArgument, "no records to save");
  const Tensor images = record_images(records);
  ByteWriter w;
  for (double v : images.vec()) w.put(v);
  const auto& blob = w.bytes();
  write_atomic(dir / "images.f64", blob);

  json m;
  m["format"] = "nrrdd-manifest";
  m["version"] = 1;
  m["config"] = cfg.kv.select(kDistillKeys).entries();
  m["image_shape"] = {images.c(), images.h(), images.w()};
  m["normalization"] = {{"mean", norm.mean}, {"std", norm.std}};
  m["images"] = {{"file", "images.f64"}, {"count", images.n()}, {"crc32", crc32(blob)}};
  json recs = json::array();
  for (const auto& r : records) {
    json j;
    j["class_id"] = r.class_id;
    json prov = json::array();
    for (const auto& p : r.provenance)
      prov.push_back({{"source", p.source_id},
                      {"box", {p.box.top, p.box.left, p.box.height, p.box.width}},
                      {"cam_mass", num_or_null(p.cam_mass)},
                      {"confidence", num_or_null(p.confidence)}});
    j["provenance"] = prov;
    j["refined"] = r.refined;
    j["partner"] = r.partner_idx ? json(*r.partner_idx) : json(nullptr);
    if (r.aug_spec) {
      const auto& s = *r.aug_spec;
      j["aug_spec"] = {{"method", to_string(s.method)},
                       {"lam", s.lam},
                       {"box", {s.box.top, s.box.left, s.box.height, s.box.width}},
                       {"seed", s.seed}};
    } else {
      j["aug_spec"] = nullptr;
    }
    j["d_org"] = r.d_org ? num_or_null(*r.d_org) : json(nullptr);
    j["d_aug"] = r.d_aug ? num_or_null(*r.d_aug) : json(nullptr);
    j["initial_loss"] = num_or_null(r.initial_loss);
    j["final_loss"] = num_or_null(r.final_loss);
    recs.push_back(j);
  }
  m["records"] = recs;
  write_text_atomic(dir / "manifest.json", m.dump(1) + "\n");
}

std::vector<SyntheticRecord> load_manifest(const fs::path& manifest) {
  require(fs::exists(manifest), ErrorCode::kMissingArtifact,
          "manifest " + manifest.string() + " not found; run `distill` first");
  json m;
  try {
    m = json::parse(read_text(manifest));
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorrupt, manifest.string() + ": " + e.what());
  }
  require(m.value("format", "") == "nrrdd-manifest", ErrorCode::kCorrupt,
          manifest.string() + " is not a manifest");
  require(m.value("version", 0) == 1, ErrorCode::kVersionMismatch,
          manifest.string() + ": unsupported manifest version");
  const fs::path blob_path = manifest.parent_path() / m["images"]["file"].get<std::string>();
  require(fs::exists(blob_path), ErrorCode::kMissingArtifact,
          "image blob " + blob_path.string() + " not found");
  const auto blob = read_file(blob_path);
  require(crc32(blob) == m["images"]["crc32"].get<std::uint32_t>(), ErrorCode::kCorrupt,
          blob_path.string() + ": checksum mismatch");
  const auto shape = m["image_shape"].get<std::vector<int>>();
  const int n = m["images"]["count"].get<int>();
  Tensor images(n, shape.at(0), shape.at(1), shape.at(2));
  require(blob.size() == images.size() * 8, ErrorCode::kCorrupt,
          blob_path.string() + ": size does not match the manifest");
  ByteReader rd(blob);
  for (auto& v : images.vec()) v = rd.get<double>();

  const auto& recs = m["records"];
  require(static_cast<int>(recs.size()) == n, ErrorCode::kCorrupt,
          manifest.string() + ": record count does not match the image count");
  std::vector<SyntheticRecord> out;
  for (int i = 0; i < n; ++i) {
    const json& j = recs[i];
    SyntheticRecord r;
    r.image = images.image(i);
    r.class_id = j["class_id"];
    for (const auto& p : j["provenance"]) {
      Patch patch;
      patch.source_id = p["source"];
      const auto b = p["box"].get<std::vector<int>>();
      patch.box = {b[0], b[1], b[2], b[3]};
      patch.cam_mass = num_or_unset(p["cam_mass"]);
      patch.confidence = num_or_unset(p["confidence"]);
      patch.class_id = r.class_id;
      r.provenance.push_back(patch);
    }
    r.refined = j["refined"];
    if (!j["partner"].is_null()) r.partner_idx = j["partner"].get<int>();
    if (!j["aug_spec"].is_null()) {
      const auto& s = j["aug_spec"];
      AugmentSpec spec;
      spec.method = parse_mix_method(s["method"]);
      spec.lam = s["lam"];
      const auto b = s["box"].get<std::vector<int>>();
      spec.box = {b[0], b[1], b[2], b[3]};
      spec.seed = s["seed"];
      r.aug_spec = spec;
    }
    if (!j["d_org"].is_null()) r.d_org = j["d_org"].get<double>();
    if (!j["d_aug"].is_null()) r.d_aug = j["d_aug"].get<double>();
    r.initial_loss = num_or_unset(j["initial_loss"]);
    r.final_loss = num_or_unset(j["final_loss"]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------- commands

fs::path cmd_train_teacher(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const fs::path dir = cfg.teacher_dir();
  const fs::path model_path = dir / "model.nrrm";
  if (fs::exists(model_path) && !opt.force) {
    say(opt, "teacher: reusing " + model_path.string());
    return model_path;
  }
  DatasetSpec spec = cfg.data;
  spec.root = resolve_data_root(spec.root);
  const DeskData data = load_desk_data(spec);
  fs::create_directories(dir);
  write_text_atomic(dir / "config.txt", cfg.kv.select(kTeacherKeys).to_text());
  const fs::path metrics = dir / "metrics.jsonl";
  fs::remove(metrics);
  say(opt, "teacher: training on " + std::to_string(data.train.size()) + " images");
  ModelSnapshot model = train_teacher(
      data.train, data.test.size() > 0 ? &data.test : nullptr, cfg.teacher, data.norm,
      cfg.teacher_seed, [&](const EpochMetrics& e) {
        json j = {{"epoch", e.epoch}, {"loss", e.loss}, {"train_accuracy", e.train_accuracy},
                  {"lr", e.lr}};
        if (e.test_accuracy >= 0) j["test_accuracy"] = e.test_accuracy;
        append_line(metrics, j.dump());
        say(opt, "teacher: epoch " + std::to_string(e.epoch + 1) + "/" +
                     std::to_string(cfg.teacher.epochs) + " loss " + std::to_string(e.loss));
      });
  const double test_acc = data.test.size() > 0 ? evaluate(model, data.test) : -1.0;
  append_line(metrics, json({{"final", true},
                             {"train_accuracy", model.meta.train_accuracy},
                             {"test_accuracy", test_acc}})
                           .dump());
  write_atomic(model_path, model.serialize());
  say(opt, "teacher: test accuracy " + std::to_string(test_acc));
  return model_path;
}

DistillOutputs cmd_distill(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const ModelSnapshot teacher = load_teacher(cfg);
  const fs::path dir = cfg.distill_dir();
  DistillOutputs out;
  out.manifest = dir / "manifest.json";
  out.store = cfg.store_path();

  std::vector<SyntheticRecord> records;
  bool fresh = false;
  if (fs::exists(out.manifest) && !opt.force) {
    say(opt, "distill: reusing " + out.manifest.string());
    records = load_manifest(out.manifest);
  } else {
    fresh = true;
    const DeskData data = load_data_for(cfg, teacher.norm, false);
    require(data.train.images.image_shape() == teacher.input_shape(), ErrorCode::kConfig,
            "dataset resolution does not match the teacher input");
    fs::create_directories(dir / "previews");
    write_text_atomic(dir / "config.txt", cfg.kv.select(kDistillKeys).to_text());
    const std::uint64_t init_seed = derive_seed(cfg.seed, {1});
    if (cfg.init == "cidd") {
      say(opt, "distill: discovering initial images");
      records = run_cidd(teacher, data.train, cfg.cidd, init_seed);
    } else {
      records = random_real_init(data.train, cfg.cidd.ipc, init_seed);
    }
    const fs::path log = dir / "refine.jsonl";
    fs::remove(log);
    if (!cfg.skip_nrr) {
      say(opt, "distill: refining " + std::to_string(records.size()) + " images for " +
                   std::to_string(cfg.refine.iterations) + " iterations");
      refine_dataset(teacher, records, cfg.refine, [&](const RefineProgress& p) {
        if (p.iteration % 10 == 0 || p.iteration + 1 == cfg.refine.iterations)
          append_line(log, json({{"iteration", p.iteration}, {"mean_loss", p.mean_loss}}).dump());
      });
    }
    // A DBR pass stores the pair-0 distances on the records for the manifest.
    RelabelConfig rc = cfg.relabel;
    rc.mode = LabelMode::kDbr;
    const LabelStore dbr = relabel(teacher, records, rc);
    save_manifest(dir, records, cfg, teacher.norm);
    std::vector<double> lo, hi;
    for (int c = 0; c < teacher.input_shape().channels; ++c) {
      lo.push_back(teacher.norm.lo(c));
      hi.push_back(teacher.norm.hi(c));
    }
    for (std::size_t i = 0; i < records.size(); ++i)
      write_pnm(dir / "previews" / ("img" + std::to_string(i) + "_c" +
                                    std::to_string(records[i].class_id) + ".ppm"),
                records[i].image, lo, hi);
    if (cfg.relabel.mode == LabelMode::kDbr) write_atomic(out.store, serialize_store(dbr));
  }
  out.records = static_cast<int>(records.size());

  std::vector<double> init_loss, final_loss;
  for (const auto& r : records)
    if (r.refined) {
      init_loss.push_back(r.initial_loss);
      final_loss.push_back(r.final_loss);
    }
  out.median_initial_loss = median(init_loss);
  out.median_final_loss = median(final_loss);
  if (fresh)
    write_text_atomic(dir / "summary.json",
                      json({{"records", out.records},
                            {"refined", init_loss.size()},
                            {"median_initial_loss", num_or_null(out.median_initial_loss)},
                            {"median_final_loss", num_or_null(out.median_final_loss)}})
                              .dump(1) + "\n");

  if (!fs::exists(out.store) || (opt.force && !fresh)) {
    say(opt, "distill: relabelling in " + to_string(cfg.relabel.mode) + " mode");
    const LabelStore store = relabel(teacher, records, cfg.relabel);
    write_atomic(out.store, serialize_store(store));
  }
  return out;
}

ResultRow cmd_transfer(const ExperimentConfig& cfg, const CommandOptions& opt) {
  const fs::path manifest = cfg.distill_dir() / "manifest.json";
  const fs::path store_path = cfg.store_path();
  require(fs::exists(manifest), ErrorCode::kMissingArtifact,
          "manifest " + manifest.string() + " not found; run `distill` first");
  require(fs::exists(store_path), ErrorCode::kMissingArtifact,
          "label store " + store_path.string() + " not found; run `distill` first");

  const std::string id = cfg.run_id();
  const std::string sweep_key = cfg.kv.get("sweep.key");
  const std::string sweep_value = cfg.kv.get("sweep.value");
  auto rows = read_results(cfg.results_path());
  auto same_row = [&](const ResultRow& r) {
    return r.run_id == id && r.experiment == cfg.experiment && r.sweep_key == sweep_key &&
           r.sweep_value == sweep_value;
  };
  if (!opt.force)
    for (const auto& r : rows)
      if (same_row(r)) {
        say(opt, "transfer: reusing result " + id);
        return r;
      }

  const ModelSnapshot teacher = load_teacher(cfg);
  const DeskData data = load_data_for(cfg, teacher.norm, true);
  require(data.test.size() > 0, ErrorCode::kConfig, "data.test_per_class must be >= 1 for transfer");
  const auto records = load_manifest(manifest);
  const Tensor images = record_images(records);
  const LabelStore store = read_store(store_path, cfg.relabel.mode);

  const fs::path sdir = cfg.student_dir();
  const fs::path model_path = sdir / "model.nrrm";
  ModelSnapshot student;
  if (fs::exists(model_path) && !opt.force) {
    say(opt, "transfer: reusing student " + model_path.string());
    student = ModelSnapshot::load(model_path);
  } else {
    fs::create_directories(sdir);
    write_text_atomic(sdir / "config.txt", cfg.kv.select(kRunKeys).to_text());
    const fs::path metrics = sdir / "metrics.jsonl";
    fs::remove(metrics);
    say(opt, "transfer: training " + to_string(store.mode) + " student on " +
                 std::to_string(store.records.size()) + " records");
    student = train_student(store, images, cfg.transfer, teacher.norm, &data.test, nullptr,
                            [&](const TransferEpoch& e) {
                              json j = {{"epoch", e.epoch}, {"loss", e.loss}, {"sce", e.sce},
                                        {"dbr", e.dbr},     {"lr", e.lr}};
                              if (e.test_accuracy >= 0) j["test_accuracy"] = e.test_accuracy;
                              append_line(metrics, j.dump());
                            });
    write_atomic(model_path, student.serialize());
  }

  ResultRow row;
  row.experiment = cfg.experiment;
  row.run_id = id;
  row.mode = to_string(store.mode);
  row.init = cfg.init;
  row.ipc = cfg.cidd.ipc;
  row.beta = cfg.cidd.beta;
  row.seed = cfg.seed;
  row.nrr = !cfg.skip_nrr;
  row.alpha_bn = cfg.refine.alpha_bn;
  row.alpha_lr = cfg.refine.alpha_lr;
  row.epsilon = cfg.refine.epsilon;
  row.r = cfg.transfer.r;
  row.pairs = cfg.relabel.pairs_per_image;
  row.records = static_cast<int>(store.records.size());
  row.store_bytes = fs::file_size(store_path);
  row.label_bytes = label_data_bytes(store.mode, store.num_classes) * store.records.size();
  row.teacher_accuracy = evaluate(teacher, data.test);
  row.accuracy = evaluate(student, data.test);
  row.sweep_key = sweep_key;
  row.sweep_value = sweep_value;

  std::string text;
  for (const auto& r : rows)
    if (!same_row(r)) text += to_json_line(r) + "\n";
  text += to_json_line(row) + "\n";
  fs::create_directories(cfg.out);
  write_text_atomic(cfg.results_path(), text);
  say(opt, "transfer: " + row.mode + " accuracy " + std::to_string(row.accuracy));
  return row;
}

double cmd_eval(const ExperimentConfig& cfg, const fs::path& snapshot) {
  const fs::path p = snapshot.empty() ? cfg.teacher_dir() / "model.nrrm" : snapshot;
  require(fs::exists(p), ErrorCode::kMissingArtifact, "snapshot " + p.string() + " not found");
  const ModelSnapshot model = ModelSnapshot::load(p);
  const DeskData data = load_data_for(cfg, model.norm, true);
  require(data.test.size() > 0, ErrorCode::kConfig, "data.test_per_class must be >= 1 for eval");
  return evaluate(model, data.test);
}

ResultRow run_pipeline(const ExperimentConfig& cfg, const CommandOptions& opt) {
  cmd_train_teacher(cfg, opt);
  cmd_distill(cfg, opt);
  return cmd_transfer(cfg, opt);
}

std::vector<ResultRow> cmd_sweep(const KeyValueConfig& base, const std::vector<std::string>& keys,
                                 const std::vector<std::string>& values,
                                 const std::vector<std::uint64_t>& seeds,
                                 const CommandOptions& opt) {
  require(!keys.empty() && !values.empty() && !seeds.empty(), ErrorCode::kConfig,
          "sweep needs keys, values and seeds");
  std::string joined;
  for (const auto& k : keys) joined += (joined.empty() ? "" : ",") + k;
  std::vector<ResultRow> rows;
  for (const auto& v : values)
    for (std::uint64_t s : seeds) {
      KeyValueConfig kv = base;
      for (const auto& k : keys) kv.set(k, v);
      kv.set("seed", std::to_string(s));
      kv.set("sweep.key", joined);
      kv.set("sweep.value", v);
      say(opt, "sweep: " + joined + " = " + v + ", seed " + std::to_string(s));
      rows.push_back(run_pipeline(ExperimentConfig::from(kv), opt));
    }
  return rows;
}

}  // namespace nrrdd
