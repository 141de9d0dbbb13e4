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

// Command-line front end; talks to the library only through the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "nrrdd/nrrdd.h"

namespace {

int report_failure(nrrdd_status s) {
  std::cerr << "nrrdd: " << nrrdd_last_error() << "\n";
  return nrrdd_exit_code(s);
}

struct Experiment {
  nrrdd_experiment* h = nullptr;
  Experiment() { nrrdd_experiment_create(&h); }
  ~Experiment() { nrrdd_experiment_destroy(h); }
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;
};

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset distillation with compact distance-based labels"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  bool force = false, quiet = false, print_config = false;
  app.add_option("-c,--config", config_path, "key = value experiment file");
  app.add_option("-s,--set", overrides, "override, key=value (repeatable)")->allow_extra_args(false);
  app.add_flag("-f,--force", force, "recompute outputs that already exist");
  app.add_flag("-q,--quiet", quiet, "no progress output");
  app.add_flag("--print-config", print_config, "print the effective config first");

  auto* teacher = app.add_subcommand("train-teacher", "train the teacher classifier");
  auto* distill = app.add_subcommand("distill", "discover, refine and relabel synthetic images");
  bool skip_nrr = false, no_bn_loss = false;
  distill->add_flag("--skip-nrr", skip_nrr, "stop after discovery (no refinement)");
  distill->add_flag("--no-bn-loss", no_bn_loss, "refine without the BN statistics term");
  auto* transfer = app.add_subcommand("transfer", "train and evaluate a student");
  auto* eval = app.add_subcommand("eval", "test accuracy of a snapshot");
  std::string snapshot;
  eval->add_option("--snapshot", snapshot, "snapshot file (default: the teacher)");
  auto* report = app.add_subcommand("report", "plots and tables from results.jsonl");
  std::string report_dir;
  report->add_option("--dir", report_dir, "results directory (default: config 'out')");
  auto* sweep = app.add_subcommand("sweep", "run the pipeline over values x seeds");
  std::vector<std::string> sweep_keys, sweep_values;
  std::string sweep_seeds = "0,1,2";
  sweep->add_option("--key", sweep_keys, "config key to vary (repeatable)")
      ->required()
      ->allow_extra_args(false);
  sweep->add_option("--values", sweep_values, "values to assign")->required()->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "comma separated seeds");
  auto* gen = app.add_subcommand("gen-data", "write a procedural CIFAR-format dataset");
  std::string gen_root = "data/shapes10";
  int gen_classes = 10, gen_train = 600, gen_test = 200;
  std::uint64_t gen_seed = 0;
  gen->add_option("--root", gen_root, "output directory");
  gen->add_option("--classes", gen_classes, "10 or 100");
  gen->add_option("--train-per-class", gen_train, "training images per class");
  gen->add_option("--test-per-class", gen_test, "test images per class");
  gen->add_option("--seed", gen_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*gen) {
    const nrrdd_status s = nrrdd_generate_data(gen_root.c_str(), gen_classes, gen_train, gen_test, gen_seed);
    if (s != NRRDD_OK) return report_failure(s);
    if (!quiet) std::cerr << "nrrdd: wrote " << gen_root << "\n";
    return 0;
  }

  Experiment exp;
  nrrdd_experiment_set_verbose(exp.h, quiet ? 0 : 1);
  if (!config_path.empty())
    if (nrrdd_status s = nrrdd_experiment_load(exp.h, config_path.c_str()); s != NRRDD_OK)
      return report_failure(s);
  for (const auto& o : overrides)
    if (nrrdd_status s = nrrdd_experiment_assign(exp.h, o.c_str()); s != NRRDD_OK)
      return report_failure(s);
  if (skip_nrr) nrrdd_experiment_set(exp.h, "refine.skip", "true");
  if (no_bn_loss) nrrdd_experiment_set(exp.h, "refine.alpha_bn", "0");

  std::size_t need = 0;
  if (nrrdd_status s = nrrdd_experiment_dump(exp.h, nullptr, 0, &need); s != NRRDD_OK)
    return report_failure(s);
  if (print_config) {
    std::string text(need, '\0');
    nrrdd_experiment_dump(exp.h, text.data(), text.size(), nullptr);
    std::cout << text.c_str();
  }

  nrrdd_status s = NRRDD_OK;
  if (*teacher) {
    char path[4096];
    s = nrrdd_train_teacher(exp.h, force, path, sizeof path);
    if (s == NRRDD_OK) std::cout << path << "\n";
  } else if (*distill) {
    int32_t records = 0;
    s = nrrdd_distill(exp.h, force, &records);
    if (s == NRRDD_OK) std::cout << "records " << records << "\n";
  } else if (*transfer) {
    nrrdd_result r{};
    s = nrrdd_transfer(exp.h, force, &r);
    if (s == NRRDD_OK)
      std::printf("accuracy %.4f teacher %.4f store_bytes %llu label_bytes %llu records %d\n",
                  r.accuracy, r.teacher_accuracy, static_cast<unsigned long long>(r.store_bytes),
                  static_cast<unsigned long long>(r.label_bytes), r.records);
  } else if (*eval) {
    double acc = 0.0;
    s = nrrdd_eval(exp.h, snapshot.empty() ? nullptr : snapshot.c_str(), &acc);
    if (s == NRRDD_OK) std::printf("accuracy %.4f\n", acc);
  } else if (*report) {
    if (report_dir.empty()) {
      std::size_t n = 0;
      nrrdd_experiment_get(exp.h, "out", nullptr, 0, &n);
      report_dir.assign(n, '\0');
      nrrdd_experiment_get(exp.h, "out", report_dir.data(), n, nullptr);
      report_dir.resize(n - 1);
    }
    s = nrrdd_report(report_dir.c_str(), quiet ? 0 : 1);
  } else if (*sweep) {
    int32_t rows = 0;
    s = nrrdd_sweep(exp.h, join(sweep_keys).c_str(), join(sweep_values).c_str(),
                    sweep_seeds.c_str(), force, &rows);
    if (s == NRRDD_OK) std::cout << "rows " << rows << "\n";
  }
  return s == NRRDD_OK ? 0 : report_failure(s);
}
