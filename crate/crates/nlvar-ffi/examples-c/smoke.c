#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "nlvar.h"

/* Build (from crates/nlvar-ffi/):
 *   cargo build --release -p nlvar-ffi
 *   cc examples-c/smoke.c -Iinclude -L../../target/release -lnlvar_ffi -lm
 *   LD_LIBRARY_PATH=../../target/release ./a.out
 */

static char *read_file(const char *path) {
  FILE *f = fopen(path, "rb");
  assert(f);
  fseek(f, 0, SEEK_END);
  long n = ftell(f);
  fseek(f, 0, SEEK_SET);
  char *buf = malloc(n + 1);
  assert(fread(buf, 1, n, f) == (size_t)n);
  buf[n] = '\0';
  fclose(f);
  return buf;
}

int main(void) {
  char *json = read_file("../nlvar/fixtures/ex_t.json");
  NlvarModel *model = NULL;
  assert(nlvar_model_parse_json(json, &model) == NLVAR_OK);
  free(json);

  size_t p = 0, k = 0;
  assert(nlvar_model_dims(model, &p, &k) == NLVAR_OK && p == 2 && k == 1);

  NlvarAnalysis *analysis = NULL;
  assert(nlvar_analysis_new(model, 1.0, 12, &analysis) == NLVAR_OK);
  size_t r = 0, q = 0;
  assert(nlvar_analysis_rank(analysis, &r, &q) == NLVAR_OK && r == 1 && q == 1);

  double z[2] = {0.3, 1.9};
  double y[2], back[2];
  assert(nlvar_chi(analysis, z, 2, y) == NLVAR_OK);
  assert(nlvar_chi_inverse(analysis, y, 2, back) == NLVAR_OK);
  assert(fabs(back[0] - z[0]) < 1e-10 && fabs(back[1] - z[1]) < 1e-10);

  double window[2] = {-1.0, -1.0};
  double theta[4];
  size_t rank;
  int differentiable;
  assert(nlvar_longrun_multipliers(analysis, window, theta, &rank,
                                   &differentiable) == NLVAR_OK);
  assert(rank == 1 && differentiable == 1);

  double lower, upper;
  int certified;
  double mats[8] = {1, 1, 0, 1, 1, 0, 1, 1};
  assert(nlvar_jsr_bounds(mats, 2, 2, 8, &lower, &upper, &certified) ==
         NLVAR_OK);
  assert(lower > 1.6 && upper < 1.7 && certified == 1);

  nlvar_analysis_free(analysis);
  nlvar_model_free(model);
  printf("c-abi smoke: OK (version %s)\n", nlvar_version());
  return 0;
}
