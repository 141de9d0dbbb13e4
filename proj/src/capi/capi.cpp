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

#include "nrrdd/nrrdd.h"

#include <cstring>
#include <iostream>
#include <sstream>
#include <string>

#include "nrrdd/harness.hpp"

struct nrrdd_experiment {
  nrrdd::KeyValueConfig user;
  bool verbose = false;
};

namespace {

thread_local std::string g_last_error;

template <class F>
nrrdd_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return NRRDD_OK;
  } catch (const nrrdd::Error& e) {
    g_last_error = e.what();
    return static_cast<nrrdd_status>(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NRRDD_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return NRRDD_E_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) nrrdd::fail(nrrdd::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

void copy_out(const std::string& s, char* buf, std::size_t cap, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf) return;
  if (cap < s.size() + 1)
    nrrdd::fail(nrrdd::ErrorCode::kInvalidArgument, "output buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

std::vector<std::string> split_csv(const char* s) {
  std::vector<std::string> out;
  std::stringstream in(s ? s : "");
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

nrrdd::CommandOptions options(const nrrdd_experiment* exp, int force) {
  nrrdd::CommandOptions o;
  o.force = force != 0;
  o.log = exp->verbose ? &std::cerr : nullptr;
  return o;
}

}  // namespace

extern "C" {

const char* nrrdd_version(void) { return "1.0.0"; }

const char* nrrdd_last_error(void) { return g_last_error.c_str(); }

int nrrdd_exit_code(nrrdd_status status) {
  if (status == NRRDD_OK) return 0;
  return nrrdd::exit_code_for(static_cast<nrrdd::ErrorCode>(status));
}

nrrdd_status nrrdd_experiment_create(nrrdd_experiment** out) {
  return guarded([&] {
    need(out, "out");
    *out = new nrrdd_experiment();
  });
}

nrrdd_status nrrdd_experiment_load(nrrdd_experiment* exp, const char* path) {
  return guarded([&] {
    need(exp, "experiment");
    need(path, "path");
    exp->user.merge(nrrdd::KeyValueConfig::load(path));
  });
}

nrrdd_status nrrdd_experiment_set(nrrdd_experiment* exp, const char* key, const char* value) {
  return guarded([&] {
    need(exp, "experiment");
    need(key, "key");
    need(value, "value");
    exp->user.set(key, value);
  });
}

nrrdd_status nrrdd_experiment_assign(nrrdd_experiment* exp, const char* assignment) {
  return guarded([&] {
    need(exp, "experiment");
    need(assignment, "assignment");
    exp->user.assign(assignment);
  });
}

nrrdd_status nrrdd_experiment_get(const nrrdd_experiment* exp, const char* key, char* buf,
                                  size_t cap, size_t* needed) {
  return guarded([&] {
    need(exp, "experiment");
    need(key, "key");
    copy_out(nrrdd::ExperimentConfig::from(exp->user).kv.get(key), buf, cap, needed);
  });
}

nrrdd_status nrrdd_experiment_dump(const nrrdd_experiment* exp, char* buf, size_t cap,
                                   size_t* needed) {
  return guarded([&] {
    need(exp, "experiment");
    copy_out(nrrdd::ExperimentConfig::from(exp->user).kv.to_text(), buf, cap, needed);
  });
}

void nrrdd_experiment_set_verbose(nrrdd_experiment* exp, int verbose) {
  if (exp) exp->verbose = verbose != 0;
}

void nrrdd_experiment_destroy(nrrdd_experiment* exp) { delete exp; }

nrrdd_status nrrdd_train_teacher(nrrdd_experiment* exp, int force, char* path_buf, size_t cap) {
  return guarded([&] {
    need(exp, "experiment");
    const auto p = nrrdd::cmd_train_teacher(nrrdd::ExperimentConfig::from(exp->user),
                                            options(exp, force));
    if (path_buf) copy_out(p.string(), path_buf, cap, nullptr);
  });
}

nrrdd_status nrrdd_distill(nrrdd_experiment* exp, int force, int32_t* records) {
  return guarded([&] {
    need(exp, "experiment");
    const auto d = nrrdd::cmd_distill(nrrdd::ExperimentConfig::from(exp->user), options(exp, force));
    if (records) *records = d.records;
  });
}

nrrdd_status nrrdd_transfer(nrrdd_experiment* exp, int force, nrrdd_result* out) {
  return guarded([&] {
    need(exp, "experiment");
    const auto r = nrrdd::cmd_transfer(nrrdd::ExperimentConfig::from(exp->user), options(exp, force));
    if (out) {
      out->accuracy = r.accuracy;
      out->teacher_accuracy = r.teacher_accuracy;
      out->store_bytes = r.store_bytes;
      out->label_bytes = r.label_bytes;
      out->records = r.records;
    }
  });
}

nrrdd_status nrrdd_eval(nrrdd_experiment* exp, const char* snapshot, double* accuracy) {
  return guarded([&] {
    need(exp, "experiment");
    need(accuracy, "accuracy");
    *accuracy = nrrdd::cmd_eval(nrrdd::ExperimentConfig::from(exp->user),
                                snapshot ? snapshot : "");
  });
}

nrrdd_status nrrdd_sweep(nrrdd_experiment* exp, const char* keys, const char* values,
                         const char* seeds, int force, int32_t* rows) {
  return guarded([&] {
    need(exp, "experiment");
    std::vector<std::uint64_t> seed_list;
    for (const auto& s : split_csv(seeds)) {
      try {
        seed_list.push_back(std::stoull(s));
      } catch (const std::exception&) {
        nrrdd::fail(nrrdd::ErrorCode::kConfig, "bad seed '" + s + "'");
      }
    }
    nrrdd::ExperimentConfig::from(exp->user);  // validate before the long run
    const auto out = nrrdd::cmd_sweep(exp->user, split_csv(keys), split_csv(values), seed_list,
                                      options(exp, force));
    if (rows) *rows = static_cast<int32_t>(out.size());
  });
}

nrrdd_status nrrdd_report(const char* dir, int verbose) {
  return guarded([&] {
    need(dir, "dir");
    nrrdd::CommandOptions o;
    o.log = verbose ? &std::cout : nullptr;
    nrrdd::cmd_report(dir, o);
  });
}

nrrdd_status nrrdd_generate_data(const char* root, int classes, int train_per_class,
                                 int test_per_class, uint64_t seed) {
  return guarded([&] {
    need(root, "root");
    nrrdd::GeneratorConfig g;
    g.num_classes = classes;
    g.train_per_class = train_per_class;
    g.test_per_class = test_per_class;
    g.seed = seed;
    nrrdd::generate_shapes(root, g);
  });
}

}  // extern "C"
