/* C interface to the nlvar toolkit.
 *
 * Conventions:
 *   - Opaque handles (NlvarModel, NlvarAnalysis) are created by the parse
 *     and new functions and released with the matching free functions.
 *     Handles are immutable and safe to share across threads.
 *   - Every fallible function returns an NlvarStatus; on failure,
 *     nlvar_last_error_message() holds a thread-local description until
 *     the next failing call on the same thread.
 *   - Vectors and matrices are flat row-major double buffers owned by the
 *     caller. State windows are in companion order: the newest observation
 *     comes first, so a window is k blocks of p doubles.
 *   - Strings returned by the library are NUL-terminated UTF-8 and must be
 *     released with nlvar_string_free().
 */

#ifndef NLVAR_H
#define NLVAR_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum NlvarStatus {
  NLVAR_OK = 0,
  NLVAR_INVALID_ARGUMENT = 1, /* null pointer, bad dimension, ...       */
  NLVAR_DOMAIN_ERROR = 2,     /* non-member model, off-attractor point  */
  NLVAR_PARSE_ERROR = 3,      /* JSON schema violation                  */
  NLVAR_PANIC = 4             /* internal panic caught at the boundary  */
} NlvarStatus;

typedef struct NlvarModel NlvarModel;
typedef struct NlvarAnalysis NlvarAnalysis;

/* --- diagnostics ------------------------------------------------------ */

const char *nlvar_last_error_message(void);
const char *nlvar_version(void);
void nlvar_string_free(char *s);

/* --- models ------------------------------------------------------------ */

/* Parse and validate a model from its JSON document. */
NlvarStatus nlvar_model_parse_json(const char *json, NlvarModel **out);
void nlvar_model_free(NlvarModel *model);
NlvarStatus nlvar_model_dims(const NlvarModel *model, size_t *p, size_t *k);
NlvarStatus nlvar_model_to_json(const NlvarModel *model, char **out);

/* Evaluate the lag map f_lag at z (len == p); writes p doubles. */
NlvarStatus nlvar_eval_f(const NlvarModel *model, size_t lag, const double *z,
                         size_t len, double *out);

/* Invert the contemporaneous map at y (len == p); writes p doubles. */
NlvarStatus nlvar_f0_inverse(const NlvarModel *model, const double *y,
                             size_t len, double *out);

/* Run the class check; the verdict is inside the returned JSON report. */
NlvarStatus nlvar_check_membership_json(const NlvarModel *model,
                                        double rho_bar, size_t depth,
                                        char **out);

/* Simulate t steps under iid N(0, sigma) shocks from the window
 * (k * p doubles, newest first). sigma is p * p row-major; out_path and
 * out_shocks receive t * p doubles each (step-major). */
NlvarStatus nlvar_simulate_gaussian(const NlvarModel *model,
                                    const double *window, const double *sigma,
                                    size_t t, uint64_t seed, double *out_path,
                                    double *out_shocks);

/* --- verified analyses -------------------------------------------------- */

/* Verify membership; fails with NLVAR_DOMAIN_ERROR unless the model is a
 * member with common-trend structure (r < p). */
NlvarStatus nlvar_analysis_new(const NlvarModel *model, double rho_bar,
                               size_t depth, NlvarAnalysis **out);
void nlvar_analysis_free(NlvarAnalysis *analysis);
NlvarStatus nlvar_analysis_rank(const NlvarAnalysis *analysis, size_t *r,
                                size_t *q);

/* Coordinate map: q trend coordinates followed by r equilibrium errors. */
NlvarStatus nlvar_chi(const NlvarAnalysis *analysis, const double *z,
                      size_t len, double *out);
NlvarStatus nlvar_chi_inverse(const NlvarAnalysis *analysis, const double *y,
                              size_t len, double *out);

/* Deterministic limit after one final shock u from the state window
 * (k * p doubles, newest first); writes p doubles. */
NlvarStatus nlvar_z_infinity(const NlvarAnalysis *analysis, const double *u,
                             const double *window, double *out);

/* Long-run multiplier at an attractor point. out_theta receives the p * p
 * matrix row-major; on a regime boundary it is filled with NaN and
 * *out_differentiable is 0 (not an error). */
NlvarStatus nlvar_longrun_multipliers(const NlvarAnalysis *analysis,
                                      const double *z, double *out_theta,
                                      size_t *out_rank,
                                      int *out_differentiable);

/* --- joint spectral radius ---------------------------------------------- */

/* Bracket the JSR of `count` square matrices of order m, passed as one
 * flat row-major buffer of count * m * m doubles. */
NlvarStatus nlvar_jsr_bounds(const double *mats, size_t count, size_t m,
                             size_t depth, double *out_lower,
                             double *out_upper, int *out_certified);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* NLVAR_H */
