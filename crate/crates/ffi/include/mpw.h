/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef MPW_H
#define MPW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpwStatus {
  MPW_STATUS_OK = 0,
  MPW_STATUS_INVALID_ARGUMENT = 1,
  MPW_STATUS_NOT_CONVERGED = 2,
  MPW_STATUS_INTEGRITY = 3,
  MPW_STATUS_RESOURCE = 4,
  MPW_STATUS_IO = 5,
  MPW_STATUS_NULL_POINTER = 6,
  MPW_STATUS_PANIC = 7,
} MpwStatus;

typedef enum MpwSolver {
  MPW_SOLVER_COLUMN = 0,
  MPW_SOLVER_FULL = 1,
  MPW_SOLVER_COLLECTIVE = 2,
} MpwSolver;

/**
 * Opaque sweep under construction or completed.
 */
typedef struct MpwSweep MpwSweep;

typedef struct MpwParams {
  uint32_t n_f;
  uint32_t n_b;
  double eps_f;
  double eps_b;
  double v_f;
  double v_b;
  double mu;
} MpwParams;

typedef struct MpwOptions {
  enum MpwSolver solver;
  double tolerance;
  uint32_t max_iterations;
  uint64_t seed;
} MpwOptions;

typedef struct MpwWitness {
  double energy;
  double lambda_g_f;
  double lambda_g_b;
  double bound_f;
  double bound_b;
  double residual;
  uint64_t iterations;
  int8_t parity;
  bool converged;
} MpwWitness;

typedef struct MpwSweepRow {
  uint32_t n_f;
  uint32_t n_b;
  double eps_f;
  double eps_b;
  double v_f;
  double v_b;
  double mu;
  double energy;
  double lambda_g_f;
  double lambda_g_b;
  double bound_f;
  double bound_b;
  uint64_t iterations;
  uint64_t wall_time_ms;
  bool converged;
} MpwSweepRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * NUL-terminated library version; static storage.
 */
const char *mpw_version(void);

/**
 * Message of the last failed call on this thread ("" after a success).
 * Valid until the next `mpw_*` call on the same thread.
 */
const char *mpw_last_error_message(void);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MpwStatus mpw_default_params(struct MpwParams *out);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MpwStatus mpw_default_options(struct MpwOptions *out);

/**
 * `N (r - N) / r`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum MpwStatus mpw_theoretical_bound(uint32_t n, uint32_t r, double *out);

/**
 * Solve and fill `out`. Returns `MPW_STATUS_NOT_CONVERGED` with `out`
 * filled when the eigensolver stopped early.
 *
 * # Safety
 * `params` and `out` must be valid pointers; `options` may be null.
 */
enum MpwStatus mpw_compute_witness(const struct MpwParams *params,
                                   const struct MpwOptions *options,
                                   struct MpwWitness *out);

/**
 * New sweep around `params`. `options` may be null.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
enum MpwStatus mpw_sweep_new(const struct MpwParams *params,
                             const struct MpwOptions *options,
                             struct MpwSweep **out);

/**
 * Add an axis (`"v_f"`, `"v_b"`, `"mu"`, `"eps_f"`, `"eps_b"`); the first
 * axis added varies slowest. Clears previous results.
 *
 * # Safety
 * `sweep` must come from `mpw_sweep_new`; `name` must be NUL-terminated.
 */
enum MpwStatus mpw_sweep_add_axis(struct MpwSweep *sweep,
                                  const char *name,
                                  double start,
                                  double stop,
                                  double step);

/**
 * Evaluate the grid with up to `workers` threads (0: `MPW_WORKERS` or all
 * cores). Failed points are kept as rows with `converged = false`, and the
 * call then returns `MPW_STATUS_NOT_CONVERGED`.
 *
 * # Safety
 * `sweep` must come from `mpw_sweep_new`.
 */
enum MpwStatus mpw_sweep_run(struct MpwSweep *sweep, uint32_t workers);

/**
 * Rows available after `mpw_sweep_run`; 0 for a null handle.
 *
 * # Safety
 * `sweep` must be null or come from `mpw_sweep_new`.
 */
size_t mpw_sweep_row_count(const struct MpwSweep *sweep);

/**
 * # Safety
 * `sweep` must come from `mpw_sweep_new`; `out` must be valid for writes.
 */
enum MpwStatus mpw_sweep_get_row(const struct MpwSweep *sweep,
                                 size_t index,
                                 struct MpwSweepRow *out);

/**
 * Write the rows in the CLI's CSV format (wall times written as 0).
 *
 * # Safety
 * `sweep` must come from `mpw_sweep_new`; `path` must be NUL-terminated.
 */
enum MpwStatus mpw_sweep_write_csv(const struct MpwSweep *sweep, const char *path);

/**
 * Release a sweep; null is ignored.
 *
 * # Safety
 * `sweep` must be null or come from `mpw_sweep_new` and not be used again.
 */
void mpw_sweep_free(struct MpwSweep *sweep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPW_H */
