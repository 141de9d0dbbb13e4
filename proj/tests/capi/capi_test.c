/* Copyright 2026 The nrrdd Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.

 */
/* Exercises the C interface from C: handles, status codes, buffers. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "nrrdd/nrrdd.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

int main(int argc, char** argv) {
  const char* scratch = argc > 1 ? argv[1] : "capi_scratch";
  char root[1024], out[1024], buf[256], path[1024];
  nrrdd_experiment* exp = NULL;
  size_t need = 0;
  nrrdd_result res;
  double acc = -1.0;
  int32_t records = 0;

  snprintf(root, sizeof root, "%s/data", scratch);
  snprintf(out, sizeof out, "%s/out", scratch);

  EXPECT(strlen(nrrdd_version()) > 0);
  EXPECT(nrrdd_experiment_create(NULL) == NRRDD_E_INVALID_ARGUMENT);
  EXPECT(strlen(nrrdd_last_error()) > 0);
  EXPECT(nrrdd_exit_code(NRRDD_OK) == 0);
  EXPECT(nrrdd_exit_code(NRRDD_E_CONFIG) == 2);
  EXPECT(nrrdd_exit_code(NRRDD_E_MISSING_ARTIFACT) == 3);
  EXPECT(nrrdd_generate_data(root, 7, 1, 1, 0) == NRRDD_E_CONFIG);
  EXPECT(nrrdd_generate_data(root, 10, 20, 5, 1) == NRRDD_OK);

  EXPECT(nrrdd_experiment_create(&exp) == NRRDD_OK);
  EXPECT(nrrdd_experiment_set(exp, "no.such.key", "1") == NRRDD_OK);
  EXPECT(nrrdd_experiment_get(exp, "ipc", buf, sizeof buf, NULL) == NRRDD_E_CONFIG);
  nrrdd_experiment_destroy(exp);

  EXPECT(nrrdd_experiment_create(&exp) == NRRDD_OK);
  EXPECT(nrrdd_experiment_get(exp, "ipc", NULL, 0, &need) == NRRDD_OK);
  EXPECT(need == 3);
  EXPECT(nrrdd_experiment_get(exp, "ipc", buf, 2, NULL) == NRRDD_E_INVALID_ARGUMENT);
  EXPECT(nrrdd_experiment_get(exp, "ipc", buf, sizeof buf, NULL) == NRRDD_OK);
  EXPECT(strcmp(buf, "10") == 0);
  EXPECT(nrrdd_experiment_assign(exp, "ipc") == NRRDD_E_CONFIG);
  EXPECT(nrrdd_experiment_load(exp, "/no/such/file.cfg") == NRRDD_E_MISSING_ARTIFACT);

  nrrdd_experiment_set(exp, "out", out);
  nrrdd_experiment_set(exp, "data.root", root);
  nrrdd_experiment_assign(exp, "data.train_per_class=20");
  nrrdd_experiment_assign(exp, "data.test_per_class=5");
  nrrdd_experiment_assign(exp, "data.resize=8");
  nrrdd_experiment_assign(exp, "teacher.epochs=1");
  nrrdd_experiment_assign(exp, "teacher.width=8");
  nrrdd_experiment_assign(exp, "student.width=8");
  nrrdd_experiment_assign(exp, "ipc=2");
  nrrdd_experiment_assign(exp, "cidd.k=4");
  nrrdd_experiment_assign(exp, "refine.iterations=2");
  nrrdd_experiment_assign(exp, "transfer.epochs=1");
  nrrdd_experiment_assign(exp, "transfer.batch=10");
  EXPECT(nrrdd_experiment_dump(exp, NULL, 0, &need) == NRRDD_OK);
  EXPECT(need > 100);

  EXPECT(nrrdd_distill(exp, 0, &records) == NRRDD_E_MISSING_ARTIFACT);
  EXPECT(nrrdd_train_teacher(exp, 0, path, sizeof path) == NRRDD_OK);
  EXPECT(strstr(path, "model.nrrm") != NULL);
  EXPECT(nrrdd_eval(exp, NULL, &acc) == NRRDD_OK);
  EXPECT(acc >= 0.0 && acc <= 1.0);
  EXPECT(nrrdd_distill(exp, 0, &records) == NRRDD_OK);
  EXPECT(records == 20);
  EXPECT(nrrdd_transfer(exp, 0, &res) == NRRDD_OK);
  EXPECT(res.records == 20);
  EXPECT(res.store_bytes == 16 + 20 * 40 + 4);
  EXPECT(res.label_bytes == 20 * 8);
  EXPECT(nrrdd_sweep(exp, "refine.epsilon", "0.3,0.7", "0", 0, &records) == NRRDD_OK);
  EXPECT(records == 2);
  EXPECT(nrrdd_report(out, 0) == NRRDD_OK);
  EXPECT(nrrdd_report("/no/such/dir", 0) == NRRDD_E_MISSING_ARTIFACT);
  nrrdd_experiment_destroy(exp);
  nrrdd_experiment_destroy(NULL);

  if (failures) fprintf(stderr, "%d C API checks failed\n", failures);
  else printf("C API checks passed\n");
  return failures ? 1 : 0;
}
