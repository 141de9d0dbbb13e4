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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nrrdd/cidd.hpp"
#include "nrrdd/config.hpp"
#include "nrrdd/dataset.hpp"
#include "nrrdd/label_store.hpp"
#include "nrrdd/refine.hpp"
#include "nrrdd/transfer.hpp"

namespace nrrdd {

/// Typed view of a complete experiment configuration. `kv` holds every key
/// with defaults filled in; it is what gets persisted next to artifacts.
struct ExperimentConfig {
  KeyValueConfig kv;

  std::string experiment;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  DatasetSpec data;
  TeacherConfig teacher;
  std::uint64_t teacher_seed = 0;
  std::string init = "cidd";  // "cidd" or "random_real"
  CiddConfig cidd;
  bool skip_nrr = false;
  RefineConfig refine;
  RelabelConfig relabel;
  TransferConfig transfer;

  /// Every recognised key with its default value.
  static KeyValueConfig defaults();
  /// Validates `user` against the schema and fills in defaults.
  static ExperimentConfig from(const KeyValueConfig& user);

  std::filesystem::path teacher_dir() const;
  std::filesystem::path distill_dir() const;
  std::filesystem::path store_path() const;
  std::filesystem::path student_dir() const;
  std::filesystem::path results_path() const;
  /// Digest of everything that influences the transfer result.
  std::string run_id() const;
};

struct CommandOptions {
  bool force = false;
  std::ostream* log = nullptr;  // progress lines; null = silent
};

/// One line of results.jsonl.
struct ResultRow {
  std::string experiment;
  std::string run_id;
  std::string mode;
  std::string init;
  int ipc = 0;
  int beta = 1;
  std::uint64_t seed = 0;
  bool nrr = true;
  double alpha_bn = 0.0;
  double alpha_lr = 0.0;
  double epsilon = 0.0;
  double r = 0.0;
  int pairs = 1;
  int records = 0;
  std::uint64_t store_bytes = 0;
  std::uint64_t label_bytes = 0;
  double teacher_accuracy = -1.0;
  double accuracy = -1.0;
  std::string sweep_key;
  std::string sweep_value;
};

/// Column order shared by results.jsonl readers and the summary table.
const std::vector<std::string>& result_columns();
std::string to_json_line(const ResultRow& row);
ResultRow parse_result_line(const std::string& line);
std::vector<ResultRow> read_results(const std::filesystem::path& path);

/// Trains (or reuses) the teacher; returns the snapshot path.
std::filesystem::path cmd_train_teacher(const ExperimentConfig& cfg, const CommandOptions& opt);

struct DistillOutputs {
  std::filesystem::path manifest;
  std::filesystem::path store;
  int records = 0;
  double median_initial_loss = kUnset;
  double median_final_loss = kUnset;
};

/// Discovery, refinement and relabelling. Needs the teacher snapshot.
DistillOutputs cmd_distill(const ExperimentConfig& cfg, const CommandOptions& opt);

/// Trains and evaluates a student on the distilled set and appends a row.
ResultRow cmd_transfer(const ExperimentConfig& cfg, const CommandOptions& opt);

/// Test accuracy of a snapshot (the teacher when `snapshot` is empty).
double cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& snapshot);

struct ReportOutputs {
  std::vector<std::filesystem::path> files;
  std::string table;  // mode comparison in plain text
};

/// Plots and summary tables for `<dir>/results.jsonl`, written to `<dir>/report`.
ReportOutputs cmd_report(const std::filesystem::path& dir, const CommandOptions& opt);

/// Runs teacher, distill and transfer for every (value, seed) pair. Each
/// value is assigned to all of `keys`; rows carry the sweep key and value.
std::vector<ResultRow> cmd_sweep(const KeyValueConfig& base, const std::vector<std::string>& keys,
                                 const std::vector<std::string>& values,
                                 const std::vector<std::uint64_t>& seeds,
                                 const CommandOptions& opt);

/// Teacher, distill and transfer in sequence.
ResultRow run_pipeline(const ExperimentConfig& cfg, const CommandOptions& opt);

/// Loads a manifest back into records (images included).
std::vector<SyntheticRecord> load_manifest(const std::filesystem::path& manifest);
void save_manifest(const std::filesystem::path& dir, const std::vector<SyntheticRecord>& records,
                   const ExperimentConfig& cfg, const Normalization& norm);

/// Process exit code for an error: 2 config, 3 missing artifact, 1 otherwise.
int exit_code_for(ErrorCode code);

}  // namespace nrrdd
