#ifndef QBSDE_H
#define QBSDE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QbsdeStatus {
  QbsdeStatus_Ok = 0,
  QbsdeStatus_NullPointer = 1,
  QbsdeStatus_InvalidUtf8 = 2,
  QbsdeStatus_Config = 3,
  QbsdeStatus_Precondition = 4,
  QbsdeStatus_Numerical = 5,
  QbsdeStatus_Io = 6,
  QbsdeStatus_OutOfRange = 7,
  QbsdeStatus_Panic = 8,
} QbsdeStatus;

/**
 * Result of running a scenario.
 */
typedef struct QbsdeOutcome QbsdeOutcome;

/**
 * Parsed scenario.
 */
typedef struct QbsdeScenario QbsdeScenario;

/**
 * Tabulated `u^f`.
 */
typedef struct QbsdeTransform QbsdeTransform;

/**
 * One check of an outcome. `criterion` is 0 when the check feeds none.
 */
typedef struct QbsdeCheck {
  uint32_t criterion;
  double value;
  double threshold;
  bool pass;
} QbsdeCheck;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the latest call on this thread if it failed, else null.
 * Valid until the next call on this thread.
 */
const char *qbsde_last_error(void);

/**
 * Library version, static storage.
 */
const char *qbsde_version(void);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `toml` is a NUL-terminated string; `out` is writable.
 */
enum QbsdeStatus qbsde_scenario_parse(const char *toml, struct QbsdeScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum QbsdeStatus qbsde_scenario_load(const char *path, struct QbsdeScenario **out);

/**
 * Replaces the seed.
 *
 * # Safety
 * `s` is a live scenario handle.
 */
enum QbsdeStatus qbsde_scenario_set_seed(struct QbsdeScenario *s, uint64_t seed);

/**
 * Runs a scenario, writing artifacts under `out_dir/<name>/`. A failing
 * check is not an error; inspect the outcome.
 *
 * # Safety
 * `s` is a live scenario handle; `out_dir` a NUL-terminated string; `out` writable.
 */
enum QbsdeStatus qbsde_scenario_run(const struct QbsdeScenario *s,
                                    const char *out_dir,
                                    struct QbsdeOutcome **out);

/**
 * # Safety
 * `s` is null or a handle from this library, not yet freed.
 */
void qbsde_scenario_free(struct QbsdeScenario *s);

/**
 * True iff the scenario ran and every check passed.
 *
 * # Safety
 * `o` is null or a live outcome handle.
 */
bool qbsde_outcome_pass(const struct QbsdeOutcome *o);

/**
 * # Safety
 * `o` is null or a live outcome handle.
 */
size_t qbsde_outcome_check_count(const struct QbsdeOutcome *o);

/**
 * # Safety
 * `o` is a live outcome handle; `out` is writable.
 */
enum QbsdeStatus qbsde_outcome_check(const struct QbsdeOutcome *o,
                                     size_t index,
                                     struct QbsdeCheck *out);

/**
 * Error text of a scenario that did not complete, or null.
 *
 * # Safety
 * `o` is null or a live outcome handle; the string lives as long as `o`.
 */
const char *qbsde_outcome_error(const struct QbsdeOutcome *o);

/**
 * # Safety
 * `o` is null or a handle from this library, not yet freed.
 */
void qbsde_outcome_free(struct QbsdeOutcome *o);

/**
 * Tabulates `u^f` for a coefficient given as TOML, e.g.
 * `kind = "indicator"\nc = 0.5\na = 1.0`.
 *
 * # Safety
 * `coefficient_toml` is a NUL-terminated string; `out` is writable.
 */
enum QbsdeStatus qbsde_transform_new(const char *coefficient_toml, struct QbsdeTransform **out);

/**
 * `u(x)` and `u'(x)`.
 *
 * # Safety
 * `t` is a live transform handle; `value` and `deriv` are writable or null.
 */
enum QbsdeStatus qbsde_transform_eval(const struct QbsdeTransform *t,
                                      double x,
                                      double *value,
                                      double *deriv);

/**
 * `u⁻¹(y)`.
 *
 * # Safety
 * `t` is a live transform handle; `x` is writable.
 */
enum QbsdeStatus qbsde_transform_invert(const struct QbsdeTransform *t, double y, double *x);

/**
 * The distortion constant `M = exp(2∫|f|)`.
 *
 * # Safety
 * `t` is null or a live transform handle. Returns NaN for null.
 */
double qbsde_transform_mass(const struct QbsdeTransform *t);

/**
 * # Safety
 * `t` is null or a handle from this library, not yet freed.
 */
void qbsde_transform_free(struct QbsdeTransform *t);

/**
 * `Y₀` of `dY = −f(Y)|Z|² dt + Z dW`, `Y_T = g(W_T)`, by quadrature.
 * Both arguments are TOML tables: a coefficient and a terminal function.
 *
 * # Safety
 * Strings are NUL-terminated; `y0` is writable.
 */
enum QbsdeStatus qbsde_pure_exact_y0(const char *coefficient_toml,
                                     const char *terminal_toml,
                                     double horizon,
                                     double *y0);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBSDE_H */
