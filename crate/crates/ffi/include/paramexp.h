#ifndef PARAMEXP_H
#define PARAMEXP_H

#include <stddef.h>
#include <stdint.h>

typedef enum PxStatus {
  PX_STATUS_OK = 0,
  PX_STATUS_NULL_POINTER = 1,
  PX_STATUS_INVALID_ARGUMENT = 2,
  PX_STATUS_INVALID_CONFIG = 3,
  PX_STATUS_FAILED = 4,
  PX_STATUS_IO = 5,
  PX_STATUS_PANIC = 6,
} PxStatus;

// Parsed experiment config.
typedef struct PxExperiment PxExperiment;

// Results of a completed experiment.
typedef struct PxResults PxResults;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t px_last_error_message(char *buf, uintptr_t len);

// Exploration level of the schedule `(theta0, theta1, theta2)` at step
// `t` of a horizon-`horizon` problem.
//
// # Safety
// `out` must be a valid pointer to a double.
enum PxStatus px_schedule_evaluate(double theta0,
                                   double theta1,
                                   double theta2,
                                   uintptr_t horizon,
                                   uintptr_t t,
                                   double *out);

// Finite-horizon Gittins index of a Beta(a, b) arm with `remaining` steps.
//
// # Safety
// `out` must be a valid pointer to a double.
enum PxStatus px_gittins_index(uint32_t a, uint32_t b, uintptr_t remaining, double *out);

// Mean and standard error of `n` values.
//
// # Safety
// `values` must point to `n` doubles; `mean` and `se` must be valid.
enum PxStatus px_summarize(const double *values, uintptr_t n, double *mean, double *se);

// Parses an experiment from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be valid.
enum PxStatus px_experiment_from_toml(const char *toml, struct PxExperiment **out);

// Loads a built-in experiment by name.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be valid.
enum PxStatus px_experiment_from_preset(const char *name, struct PxExperiment **out);

// Overrides the replicate count and base seed.
//
// # Safety
// `exp` must be a live handle.
enum PxStatus px_experiment_set_run(struct PxExperiment *exp, uintptr_t replicates, uint64_t seed);

// Number of variants in the experiment.
//
// # Safety
// `exp` must be a live handle and `out` valid.
enum PxStatus px_experiment_n_variants(const struct PxExperiment *exp, uintptr_t *out);

// Runs every episode; `workers == 0` uses every core.
//
// # Safety
// `exp` must be a live handle and `out` valid.
enum PxStatus px_experiment_run(const struct PxExperiment *exp,
                                uintptr_t workers,
                                struct PxResults **out);

// # Safety
// `exp` must be null or a handle not yet freed.
void px_experiment_free(struct PxExperiment *exp);

// Summary of variant `index`: completed replicates, mean and SE. A
// variant with no completed replicate reports `n = 0` and NaN values.
//
// # Safety
// `res` must be a live handle; out-pointers must be valid.
enum PxStatus px_results_summary(const struct PxResults *res,
                                 uintptr_t index,
                                 uintptr_t *n,
                                 double *mean,
                                 double *se);

// Copies the name of variant `index` like `px_last_error_message`.
//
// # Safety
// `res` must be a live handle; `buf` null or `len` writable bytes;
// `full_len` valid.
enum PxStatus px_results_variant_name(const struct PxResults *res,
                                      uintptr_t index,
                                      char *buf,
                                      uintptr_t len,
                                      uintptr_t *full_len);

// Number of failed episodes.
//
// # Safety
// `res` must be a live handle and `out` valid.
enum PxStatus px_results_n_failures(const struct PxResults *res, uintptr_t *out);

// Writes the CSV logs and metadata into directory `dir`.
//
// # Safety
// `res` must be a live handle; `dir` a NUL-terminated path.
enum PxStatus px_results_write(const struct PxResults *res, const char *dir);

// # Safety
// `res` must be null or a handle not yet freed.
void px_results_free(struct PxResults *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARAMEXP_H */
