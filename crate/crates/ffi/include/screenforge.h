#ifndef SCREENFORGE_H
#define SCREENFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_MODEL_ERROR = 3,
  SF_STATUS_SOLVER_ERROR = 4,
  SF_STATUS_BUFFER_TOO_SMALL = 5,
  SF_STATUS_PANIC = 6,
} SfStatus;

typedef enum SfRegime {
  SF_REGIME_SIMULTANEOUS = 0,
  SF_REGIME_SEQUENTIAL = 1,
  SF_REGIME_RELAXED = 2,
  SF_REGIME_SEPARATE = 3,
} SfRegime;

/**
 * A discretized instance for the LP oracle.
 */
typedef struct SfInstance SfInstance;

/**
 * A solved option menu with upfront fees.
 */
typedef struct SfMechanism SfMechanism;

/**
 * A model family with its quadrature settings.
 */
typedef struct SfModel SfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library; static, never freed.
 */
const char *sf_version(void);

/**
 * Copies the calling thread's last error message, NUL-terminated, into
 * `buf`. `len` receives the required size including the terminator.
 *
 * # Safety
 * `buf` must be writable for `cap` bytes or null; `len` must be valid.
 */
enum SfStatus sf_last_error(char *buf, size_t cap, size_t *len);

/**
 * Builds a model from a family JSON object such as
 * `{"name": "cl-uniform", "goods": 2}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid.
 */
enum SfStatus sf_model_new(const char *json, struct SfModel **out);

/**
 * # Safety
 * `model` must come from [`sf_model_new`] and not be used afterwards.
 */
void sf_model_free(struct SfModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum SfStatus sf_model_dim(const struct SfModel *model, size_t *out);

/**
 * Joint density `f(theta | gamma)`; `theta` has `n` entries.
 *
 * # Safety
 * Pointers must be valid and `theta` readable for `n` values.
 */
enum SfStatus sf_model_density(const struct SfModel *model,
                               double gamma,
                               const double *theta,
                               size_t n,
                               double *out);

/**
 * Solves strikes and upfront fees on `gamma_points` equally spaced types.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfStatus sf_mechanism_solve(const struct SfModel *model,
                                 size_t gamma_points,
                                 struct SfMechanism **out);

/**
 * # Safety
 * `mech` must come from [`sf_mechanism_solve`] and not be used afterwards.
 */
void sf_mechanism_free(struct SfMechanism *mech);

/**
 * Number of grid points of the menu.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfStatus sf_mechanism_len(const struct SfMechanism *mech, size_t *out);

/**
 * Grid point `i`: its type, upfront fee and `n` strike prices.
 *
 * # Safety
 * Pointers must be valid and `strikes` writable for `n` values.
 */
enum SfStatus sf_mechanism_row(const struct SfMechanism *mech,
                               size_t i,
                               double *gamma,
                               double *upfront,
                               double *strikes,
                               size_t n);

/**
 * Expected revenue as fees plus strike payments, and through the
 * information-rent form.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfStatus sf_mechanism_revenue(const struct SfModel *model,
                                   const struct SfMechanism *mech,
                                   double *direct,
                                   double *functional);

/**
 * Discretizes a model: `gamma_cells` types and `theta_cells[j]` cells for good `j`.
 *
 * # Safety
 * Pointers must be valid and `theta_cells` readable for `n` values.
 */
enum SfStatus sf_instance_discretize(const struct SfModel *model,
                                     size_t gamma_cells,
                                     const size_t *theta_cells,
                                     size_t n,
                                     struct SfInstance **out);

/**
 * Loads an instance from its JSON dump.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid.
 */
enum SfStatus sf_instance_from_json(const char *json, struct SfInstance **out);

/**
 * # Safety
 * `inst` must come from this library and not be used afterwards.
 */
void sf_instance_free(struct SfInstance *inst);

/**
 * Optimal expected revenue of the instance under `regime`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfStatus sf_oracle_value(const struct SfInstance *inst, enum SfRegime regime, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCREENFORGE_H */
