#ifndef CYCIP_H
#define CYCIP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CycipControl {
  CYCIP_CONTROL_CYCLIC = 0,
  CYCIP_CONTROL_RANDOM = 1,
} CycipControl;

typedef enum CycipMetric {
  CYCIP_METRIC_D2 = 0,
  CYCIP_METRIC_DINF = 1,
} CycipMetric;

typedef enum CycipOperators {
  CYCIP_OPERATORS_INTREPID = 0,
  CYCIP_OPERATORS_PROJECTION = 1,
} CycipOperators;

typedef enum CycipSolveStatus {
  CYCIP_SOLVE_STATUS_SOLVED = 0,
  CYCIP_SOLVE_STATUS_ITERATION_LIMIT = 1,
  CYCIP_SOLVE_STATUS_TIME_LIMIT = 2,
} CycipSolveStatus;

typedef enum CycipStart {
  CYCIP_START_INTERPOLANT = 0,
  CYCIP_START_ZERO = 1,
} CycipStart;

/**
 * Return codes.
 */
typedef enum CycipStatus {
  CYCIP_STATUS_OK = 0,
  CYCIP_STATUS_NULL_POINTER = 1,
  CYCIP_STATUS_INVALID_ARGUMENT = 2,
  CYCIP_STATUS_PARSE_ERROR = 3,
  CYCIP_STATUS_IO_ERROR = 4,
  CYCIP_STATUS_SOLVER_ERROR = 5,
  CYCIP_STATUS_BUFFER_TOO_SMALL = 6,
  CYCIP_STATUS_PANIC = 7,
} CycipStatus;

/**
 * Opaque road problem.
 */
typedef struct CycipProblem CycipProblem;

/**
 * Opaque solver result.
 */
typedef struct CycipResult CycipResult;

/**
 * Solver settings; obtain defaults from [`cycip_solve_options_default`].
 */
typedef struct CycipSolveOptions {
  double eps;
  enum CycipMetric metric;
  enum CycipControl control;
  uint64_t seed;
  /**
   * Seconds; `<= 0` disables the time limit.
   */
  double max_time;
  uint64_t max_iterations;
  enum CycipOperators operators;
  enum CycipStart start;
} CycipSolveOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *cycip_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cycip_version(void);

/**
 * Loads a `roadfp/1` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CycipStatus cycip_problem_load(const char *path, struct CycipProblem **out);

/**
 * Parses `roadfp/1` text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CycipStatus cycip_problem_parse(const char *text, struct CycipProblem **out);

/**
 * Generates a strictly feasible problem with `n` stations. A positive
 * `min_slope` adds the minimum absolute slope constraint. When `witness`
 * is non-NULL it receives a feasible point (`n` values).
 *
 * # Safety
 * `out` must be valid; `witness` must be NULL or point to `n` doubles.
 */
enum CycipStatus cycip_problem_generate(size_t n,
                                        uint64_t seed,
                                        double min_slope,
                                        struct CycipProblem **out,
                                        double *witness);

/**
 * Number of stations, or 0 for NULL.
 *
 * # Safety
 * `p` must be NULL or a live problem handle.
 */
size_t cycip_problem_dim(const struct CycipProblem *p);

/**
 * # Safety
 * `p` must be NULL or a handle not yet freed.
 */
void cycip_problem_free(struct CycipProblem *p);

struct CycipSolveOptions cycip_solve_options_default(void);

/**
 * Runs the solver. A run that stops at a limit still returns `Ok`; read
 * the outcome with [`cycip_result_status`].
 *
 * # Safety
 * `p` must be a live problem, `opts` NULL (defaults) or valid, `out` valid.
 */
enum CycipStatus cycip_solve(const struct CycipProblem *p,
                             const struct CycipSolveOptions *opts,
                             struct CycipResult **out);

/**
 * # Safety
 * `r` must be a live result handle.
 */
enum CycipSolveStatus cycip_result_status(const struct CycipResult *r);

/**
 * # Safety
 * `r` must be NULL or a live result handle.
 */
uint64_t cycip_result_iterations(const struct CycipResult *r);

/**
 * # Safety
 * `r` must be NULL or a live result handle.
 */
double cycip_result_d2(const struct CycipResult *r);

/**
 * # Safety
 * `r` must be NULL or a live result handle.
 */
double cycip_result_dinf(const struct CycipResult *r);

/**
 * Solver wall time in milliseconds.
 *
 * # Safety
 * `r` must be NULL or a live result handle.
 */
double cycip_result_time_ms(const struct CycipResult *r);

/**
 * Copies the final point into `buf` (`len` must be at least the problem
 * dimension).
 *
 * # Safety
 * `r` must be a live result handle and `buf` must hold `len` doubles.
 */
enum CycipStatus cycip_result_point(const struct CycipResult *r, double *buf, size_t len);

/**
 * # Safety
 * `r` must be NULL or a handle not yet freed.
 */
void cycip_result_free(struct CycipResult *r);

/**
 * Checks `x` against every constraint with slack tolerance `tol`;
 * `*feasible` receives 1 or 0.
 *
 * # Safety
 * `p` must be a live problem, `x` must hold `len` doubles, `feasible`
 * must be valid.
 */
enum CycipStatus cycip_verify(const struct CycipProblem *p,
                              const double *x,
                              size_t len,
                              double tol,
                              int32_t *feasible);

/**
 * Projects `x` (length `n`) in place onto `lower <= <a, x> <= upper`.
 *
 * # Safety
 * `a` and `x` must each hold `n` doubles.
 */
enum CycipStatus cycip_project_hyperslab(const double *a,
                                         size_t n,
                                         double lower,
                                         double upper,
                                         double *x);

/**
 * Applies the intrepid projector onto the `beta`-enlargement of the
 * hyperplane `<a, x> = offset` to `x` in place.
 *
 * # Safety
 * `a` and `x` must each hold `n` doubles.
 */
enum CycipStatus cycip_intrepid_hyperplane(const double *a,
                                           size_t n,
                                           double offset,
                                           double beta,
                                           double *x);

/**
 * Performance profile from a row-major timing matrix `times[a * n_problems
 * + p]` (seconds; NaN, infinite or negative entries mark unsolved runs).
 * Writes `rho[a * n_kappa + k]`.
 *
 * # Safety
 * `times` must hold `n_algorithms * n_problems` doubles, `kappa` must
 * hold `n_kappa`, and `rho` must hold `n_algorithms * n_kappa`.
 */
enum CycipStatus cycip_performance_profile(const double *times,
                                           size_t n_algorithms,
                                           size_t n_problems,
                                           const double *kappa,
                                           size_t n_kappa,
                                           double *rho);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CYCIP_H */
