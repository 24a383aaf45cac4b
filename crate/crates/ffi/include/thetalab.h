#ifndef THETALAB_H
#define THETALAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TlStatus {
  TL_STATUS_OK = 0,
  TL_STATUS_NULL_POINTER = 1,
  TL_STATUS_INVALID_UTF8 = 2,
  TL_STATUS_PARSE_ERROR = 3,
  TL_STATUS_DOMAIN_ERROR = 4,
  TL_STATUS_INVALID_ARGUMENT = 5,
  TL_STATUS_NUMERICAL_ERROR = 6,
  TL_STATUS_CONFIG_ERROR = 7,
  TL_STATUS_IO_ERROR = 8,
  TL_STATUS_BUFFER_TOO_SMALL = 9,
  TL_STATUS_PANIC = 10,
} TlStatus;

/*
 A parsed function of `t`.
 */
typedef struct TlExpr TlExpr;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parses `text` into a new handle stored in `*out`.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TlStatus tl_expr_parse(const char *text, struct TlExpr **out);

/*
 Evaluates the expression at `t`.

 # Safety
 `expr` must come from this library and `out` must be valid.
 */
enum TlStatus tl_expr_eval(const struct TlExpr *expr, double t, double *out);

/*
 Symbolic derivative as a new handle.

 # Safety
 `expr` must come from this library and `out` must be valid.
 */
enum TlStatus tl_expr_derivative(const struct TlExpr *expr, struct TlExpr **out);

/*
 Canonical text of the expression; free with [`tl_string_free`].

 # Safety
 `expr` must come from this library and `out` must be valid.
 */
enum TlStatus tl_expr_to_string(const struct TlExpr *expr, char **out);

/*
 # Safety
 `s` must be null or a string returned by this library, freed once.
 */
void tl_string_free(char *s);

/*
 # Safety
 `expr` must be null or a handle returned by this library, freed once.
 */
void tl_expr_free(struct TlExpr *expr);

/*
 `int_{(t - theta)^+}^t f(s) ds`.

 # Safety
 `f` must come from this library and `out` must be valid.
 */
enum TlStatus tl_moving_average(const struct TlExpr *f,
                                double theta,
                                double t,
                                double quad_tol,
                                double *out);

/*
 Solves `y' = -alpha y + f`, `y(0) = y0` on the grid `0, h, ..., t_end`
 and writes the samples into `values`. `*written` receives the number of
 grid points; when `capacity` is too small nothing else is written and
 [`TlStatus::BufferTooSmall`] is returned.

 # Safety
 `values` must point to `capacity` writable doubles, `written` must be valid.
 */
enum TlStatus tl_solve_scalar(const struct TlExpr *f,
                              double alpha,
                              double y0,
                              double t_end,
                              double h,
                              double quad_tol,
                              double *values,
                              size_t capacity,
                              size_t *written);

/*
 Runs a scenario file, writing artifacts under `out_dir`. `*exit_code`
 receives the command-line exit code (0 when no scenario errored).

 # Safety
 Both paths must be NUL-terminated strings and `exit_code` valid.
 */
enum TlStatus tl_run_config(const char *config_path, const char *out_dir, int *exit_code);

/*
 Message of the last failure on this thread, or null. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *tl_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* THETALAB_H */
