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

/* C interface to the distillation pipeline. All functions return an
 * nrrdd_status; on failure nrrdd_last_error() describes the problem. */
#ifndef NRRDD_NRRDD_H_
#define NRRDD_NRRDD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(NRRDD_BUILDING)
#define NRRDD_API __attribute__((visibility("default")))
#else
#define NRRDD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nrrdd_status {
  NRRDD_OK = 0,
  NRRDD_E_INVALID_ARGUMENT = 1,
  NRRDD_E_CONFIG = 2,
  NRRDD_E_MISSING_ARTIFACT = 3,
  NRRDD_E_IO = 4,
  NRRDD_E_CORRUPT = 5,
  NRRDD_E_VERSION_MISMATCH = 6,
  NRRDD_E_MODE_MISMATCH = 7,
  NRRDD_E_SHAPE_MISMATCH = 8,
  NRRDD_E_UNSUPPORTED = 9,
  NRRDD_E_INTERNAL = 10
} nrrdd_status;

/* Experiment configuration handle. */
typedef struct nrrdd_experiment nrrdd_experiment;

typedef struct nrrdd_result {
  double accuracy;
  double teacher_accuracy;
  uint64_t store_bytes;
  uint64_t label_bytes;
  int32_t records;
} nrrdd_result;

NRRDD_API const char* nrrdd_version(void);
/* Message of the last failed call on this thread ("" if none). */
NRRDD_API const char* nrrdd_last_error(void);
/* Process exit code for a status: 0, 2 (config), 3 (missing artifact) or 1. */
NRRDD_API int nrrdd_exit_code(nrrdd_status status);

NRRDD_API nrrdd_status nrrdd_experiment_create(nrrdd_experiment** out);
/* Reads a key = value file into an existing handle (later keys win). */
NRRDD_API nrrdd_status nrrdd_experiment_load(nrrdd_experiment* exp, const char* path);
NRRDD_API nrrdd_status nrrdd_experiment_set(nrrdd_experiment* exp, const char* key, const char* value);
/* One "key=value" override. */
NRRDD_API nrrdd_status nrrdd_experiment_assign(nrrdd_experiment* exp, const char* assignment);
/* Copies the effective value of `key` (defaults included). `needed` gets
 * the size including the terminator; a short buffer yields
 * NRRDD_E_INVALID_ARGUMENT. */
NRRDD_API nrrdd_status nrrdd_experiment_get(const nrrdd_experiment* exp, const char* key, char* buf,
                                            size_t cap, size_t* needed);
/* Full effective configuration as text, same buffer contract as _get. */
NRRDD_API nrrdd_status nrrdd_experiment_dump(const nrrdd_experiment* exp, char* buf, size_t cap,
                                             size_t* needed);
/* Progress lines on stderr when non-zero. */
NRRDD_API void nrrdd_experiment_set_verbose(nrrdd_experiment* exp, int verbose);
NRRDD_API void nrrdd_experiment_destroy(nrrdd_experiment* exp);

NRRDD_API nrrdd_status nrrdd_train_teacher(nrrdd_experiment* exp, int force, char* path_buf,
                                           size_t cap);
NRRDD_API nrrdd_status nrrdd_distill(nrrdd_experiment* exp, int force, int32_t* records);
NRRDD_API nrrdd_status nrrdd_transfer(nrrdd_experiment* exp, int force, nrrdd_result* out);
/* Test accuracy of `snapshot`, or of the teacher when it is NULL. */
NRRDD_API nrrdd_status nrrdd_eval(nrrdd_experiment* exp, const char* snapshot, double* accuracy);
/* Runs teacher, distill and transfer for every value x seed. Lists are
 * comma separated; each value is assigned to every key in `keys`. */
NRRDD_API nrrdd_status nrrdd_sweep(nrrdd_experiment* exp, const char* keys, const char* values,
                                   const char* seeds, int force, int32_t* rows);
/* Writes plots and tables for <dir>/results.jsonl into <dir>/report. */
NRRDD_API nrrdd_status nrrdd_report(const char* dir, int verbose);
/* Procedural CIFAR-format archive with 10 or 100 classes. */
NRRDD_API nrrdd_status nrrdd_generate_data(const char* root, int classes, int train_per_class,
                                           int test_per_class, uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif /* NRRDD_NRRDD_H_ */
