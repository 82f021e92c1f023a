#ifndef BT_H
#define BT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtStatus {
  BT_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  BT_STATUS_NULL_POINTER = 1,
  /**
   * Bad parameter or buffer length.
   */
  BT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The problem data failed validation.
   */
  BT_STATUS_INVALID_PROBLEM = 3,
  /**
   * The solve stopped at its iteration limit; the result is still set.
   */
  BT_STATUS_NOT_CONVERGED = 4,
  /**
   * Overflow, underflow or a stalled iteration.
   */
  BT_STATUS_NUMERICAL = 5,
  /**
   * The exact oracle refused a problem above its size guard.
   */
  BT_STATUS_SIZE_GUARD = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  BT_STATUS_PANIC = 7,
} BtStatus;

typedef enum BtSense {
  BT_SENSE_MAXIMIZE = 0,
  BT_SENSE_MINIMIZE = 1,
} BtSense;

/**
 * Opaque transport problem.
 */
typedef struct BtProblem BtProblem;

/**
 * Opaque solve result.
 */
typedef struct BtSolveResult BtSolveResult;

/**
 * Balance check of a plan. Locations are 0-based, -1 when absent.
 */
typedef struct BtKktReport {
  bool is_balanced;
  double max_slackness_violation;
  int64_t slackness_row;
  int64_t slackness_col;
  double max_dual_infeasibility;
  int64_t infeasibility_row;
  int64_t infeasibility_col;
  double row_residual;
  double col_residual;
  double primal_objective;
  double dual_objective;
  double duality_gap;
} BtKktReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bt_version(void);

/**
 * Builds a problem from `n * m` weights and the two marginals.
 */
enum BtStatus bt_problem_new(size_t n,
                             size_t m,
                             const double *weights,
                             const double *row_marginals,
                             const double *col_marginals,
                             enum BtSense sense,
                             struct BtProblem **out);

void bt_problem_free(struct BtProblem *problem);

/**
 * Solves with `stages` annealing stages ending at `eta`, each reducing the
 * temperature by `factor` (ignored when `stages == 1`). `max_iters` of 0
 * selects the default limit. On `BT_STATUS_NOT_CONVERGED` the best iterate
 * is still returned in `*out`.
 */
enum BtStatus bt_solve(const struct BtProblem *problem,
                       double eta,
                       size_t stages,
                       double factor,
                       double tol,
                       size_t max_iters,
                       struct BtSolveResult **out);

void bt_result_free(struct BtSolveResult *result);

size_t bt_result_rows(const struct BtSolveResult *result);

size_t bt_result_cols(const struct BtSolveResult *result);

bool bt_result_converged(const struct BtSolveResult *result);

/**
 * Total full steps over all stages.
 */
size_t bt_result_iterations(const struct BtSolveResult *result);

/**
 * Criterion at the end of the last stage; NaN for a null handle.
 */
double bt_result_final_criterion(const struct BtSolveResult *result);

/**
 * Copies the plan into `out` (row-major, `len == rows * cols`).
 */
enum BtStatus bt_result_plan(const struct BtSolveResult *result, double *out, size_t len);

/**
 * Copies the row weights `alpha` (length rows) and column multipliers
 * `beta` (length cols).
 */
enum BtStatus bt_result_scalings(const struct BtSolveResult *result,
                                 double *alpha,
                                 size_t n,
                                 double *beta,
                                 size_t m);

/**
 * Exact optimum by the transportation simplex. `plan` may be null when
 * only the objective is wanted.
 */
enum BtStatus bt_lp_oracle(const struct BtProblem *problem,
                           double *plan,
                           size_t len,
                           double *objective);

/**
 * Checks `plan` for balance, recovering duals from its support.
 */
enum BtStatus bt_verify(const struct BtProblem *problem,
                        const double *plan,
                        size_t len,
                        struct BtKktReport *out);

/**
 * Hilbert projective distance between two positive vectors of length `len`.
 */
enum BtStatus bt_hilbert_distance(const double *x, const double *y, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BT_H */
