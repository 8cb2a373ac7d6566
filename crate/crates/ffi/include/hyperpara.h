/* hyperpara C API. Generated by cbindgen; do not edit. */

#ifndef HYPERPARA_H
#define HYPERPARA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum HpStatus {
  HP_STATUS_OK = 0,
  HP_STATUS_NULL_POINTER = 1,
  HP_STATUS_INVALID_UTF8 = 2,
  // Unreadable, malformed or invalid scenario.
  HP_STATUS_SCENARIO = 3,
  // Picard iteration failed or a solver rejected its input.
  HP_STATUS_SOLVER = 4,
  // Writing artifacts failed.
  HP_STATUS_IO = 5,
  // Index past the end or buffer too small.
  HP_STATUS_OUT_OF_RANGE = 6,
  // Internal panic; the handle involved must not be reused.
  HP_STATUS_PANIC = 7,
} HpStatus;

// A validated scenario.
typedef struct HpScenario HpScenario;

// A solved coupled trace together with the scenario it came from.
typedef struct HpTrace HpTrace;

// Norms of both components at one stored time.
typedef struct HpNorms {
  double t;
  double u_l1;
  double u_linf;
  double u_tv;
  double w_l1;
  double w_linf;
  double w_tv;
} HpNorms;

// Condensed a-priori ledger.
typedef struct HpBoundsSummary {
  // 1 if all six inequalities hold, else 0.
  int32_t pass;
  // Largest lhs/rhs over all inequalities and times.
  double max_ratio;
  double k_v;
  double c_v;
  double u_min;
  double w_min;
} HpBoundsSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *hp_last_error(void);

// Library version as a static NUL-terminated string.
const char *hp_version(void);

// Loads and validates a scenario file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum HpStatus hp_scenario_load(const char *path, struct HpScenario **out);

// Parses and validates a scenario document held in memory.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum HpStatus hp_scenario_parse(const char *text, struct HpScenario **out);

// Number of cells of the scenario's grid.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum HpStatus hp_scenario_cell_count(const struct HpScenario *scenario, size_t *out);

// Releases a scenario. NULL is ignored.
//
// # Safety
// `scenario` must be NULL or a handle not yet freed.
void hp_scenario_free(struct HpScenario *scenario);

// Solves the coupled system.
//
// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum HpStatus hp_solve(const struct HpScenario *scenario, struct HpTrace **out);

// Releases a trace. NULL is ignored.
//
// # Safety
// `trace` must be NULL or a handle not yet freed.
void hp_trace_free(struct HpTrace *trace);

// Number of stored times (steps + 1); 0 for NULL.
//
// # Safety
// `trace` must be NULL or a live handle.
size_t hp_trace_len(const struct HpTrace *trace);

// Number of cells per snapshot; 0 for NULL.
//
// # Safety
// `trace` must be NULL or a live handle.
size_t hp_trace_cell_count(const struct HpTrace *trace);

// Norms at stored time `k`.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum HpStatus hp_trace_norms(const struct HpTrace *trace, size_t k, struct HpNorms *out);

// Copies the `u` snapshot at stored time `k` into `buf` (row-major, `x`
// fastest), which must hold `hp_trace_cell_count` values.
//
// # Safety
// `trace` must be a live handle and `buf` valid for `len` writes.
enum HpStatus hp_trace_u(const struct HpTrace *trace, size_t k, double *buf, size_t len);

// Copies the `w` snapshot at stored time `k`; see [`hp_trace_u`].
//
// # Safety
// `trace` must be a live handle and `buf` valid for `len` writes.
enum HpStatus hp_trace_w(const struct HpTrace *trace, size_t k, double *buf, size_t len);

// Computes the a-priori ledger of a trace.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum HpStatus hp_trace_bounds(const struct HpTrace *trace, struct HpBoundsSummary *out);

// The full ledger as JSON; release with `hp_string_free`.
//
// # Safety
// `trace` must be a live handle and `out` a valid pointer.
enum HpStatus hp_trace_bounds_json(const struct HpTrace *trace, char **out);

// Releases a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a string from this library not yet freed.
void hp_string_free(char *s);

// Loads `scenario_path`, solves, and writes all run artifacts to `out_dir`
// (NULL selects the scenario's output directory).
//
// # Safety
// Both arguments must be NULL-or-NUL-terminated strings; `scenario_path`
// must not be NULL.
enum HpStatus hp_run(const char *scenario_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERPARA_H */
