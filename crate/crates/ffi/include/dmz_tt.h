#ifndef DMZ_TT_H
#define DMZ_TT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Spatial discretization of the drift term.
typedef enum DmzAdvection {
  DMZ_ADVECTION_CENTRAL = 0,
  DMZ_ADVECTION_UPWIND = 1,
  DMZ_ADVECTION_FITTED = 2,
} DmzAdvection;

// Result code of every exported function.
typedef enum DmzStatus {
  DMZ_STATUS_OK = 0,
  // A required pointer was null.
  DMZ_STATUS_NULL_POINTER = 1,
  // Bad argument, shape or configuration.
  DMZ_STATUS_INVALID_ARGUMENT = 2,
  // Non-convergence, collapse or another numerical failure.
  DMZ_STATUS_NUMERICAL = 3,
  DMZ_STATUS_IO = 4,
  // A Rust panic was caught; the handle involved should be freed.
  DMZ_STATUS_INTERNAL = 5,
} DmzStatus;

// Grid filter: operators plus the current density.
typedef struct DmzFilter DmzFilter;

// Signal/observation model.
typedef struct DmzModel DmzModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call into this library on the same thread.
const char *dmz_last_error(void);

// Cubic sensor of dimension `dim`: `h = x³` observations of a coupled sine drift.
//
// # Safety
// `out` must be a valid pointer to a `DmzModel*`.
enum DmzStatus dmz_model_cubic_sensor(uintptr_t dim, struct DmzModel **out);

// Four-dimensional bimodal model.
//
// # Safety
// `out` must be a valid pointer to a `DmzModel*`.
enum DmzStatus dmz_model_multimode(struct DmzModel **out);

// Scalar `dx = a x dt + g dv + r dw`, `dy = c x dt + dw`.
//
// # Safety
// `out` must be a valid pointer to a `DmzModel*`.
enum DmzStatus dmz_model_linear(double a, double g, double r, double c, struct DmzModel **out);

// # Safety
// `model` must come from a `dmz_model_*` constructor and not be freed twice.
void dmz_model_free(struct DmzModel *model);

// State dimension of a model, 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t dmz_model_dim(const struct DmzModel *model);

// Assembles the operators on `[-half_width, half_width]^d` with `n` points
// per direction and starts from `N(init_mean, diag(init_std²))`.
// `advection_code` is a [`DmzAdvection`] value.
//
// # Safety
// `model` must be a live handle, `init_mean` and `init_std` must point to
// `dmz_model_dim(model)` values, `out` to a `DmzFilter*`.
enum DmzStatus dmz_filter_new(const struct DmzModel *model,
                              double half_width,
                              uintptr_t n,
                              double delta,
                              double eps_tt,
                              uint32_t advection_code,
                              const double *init_mean,
                              const double *init_std,
                              struct DmzFilter **out);

// # Safety
// `filter` must come from [`dmz_filter_new`] and not be freed twice.
void dmz_filter_free(struct DmzFilter *filter);

// Advances by one step given the observation increment `dy` (length `d`).
// On failure the filter keeps its previous state.
//
// # Safety
// `filter` must be a live handle and `dy` must point to `len` values.
enum DmzStatus dmz_filter_step(struct DmzFilter *filter, const double *dy, uintptr_t len);

// Writes the posterior mean into `out` (length `d`).
//
// # Safety
// `filter` must be a live handle and `out` must hold `len` values.
enum DmzStatus dmz_filter_mean(const struct DmzFilter *filter, double *out, uintptr_t len);

// Writes the probability mass per cell of direction `k` into `out` (length `n`).
//
// # Safety
// `filter` must be a live handle and `out` must hold `len` values.
enum DmzStatus dmz_filter_marginal(const struct DmzFilter *filter,
                                   uintptr_t k,
                                   double *out,
                                   uintptr_t len);

// Largest TT-rank of the current density, 0 for a null handle.
//
// # Safety
// `filter` must be null or a live handle.
uintptr_t dmz_filter_max_rank(const struct DmzFilter *filter);

// Steps taken so far, 0 for a null handle.
//
// # Safety
// `filter` must be null or a live handle.
uintptr_t dmz_filter_steps(const struct DmzFilter *filter);

// Runs the experiment described by a TOML file and writes results (and plot
// tables) under `out_dir`, or under the file's `output_dir` if `out_dir` is null.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out_dir` null or one.
enum DmzStatus dmz_run_experiment(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DMZ_TT_H */
