#ifndef MMIMO_H
#define MMIMO_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmimoStatus {
  MMIMO_STATUS_OK = 0,
  MMIMO_STATUS_NULL_POINTER = 1,
  MMIMO_STATUS_INVALID_STRING = 2,
  MMIMO_STATUS_CONFIG = 3,
  MMIMO_STATUS_INVALID_INPUT = 4,
  MMIMO_STATUS_NON_CONVERGENCE = 5,
  MMIMO_STATUS_NUMERICAL = 6,
  MMIMO_STATUS_IO = 7,
  MMIMO_STATUS_SERIALIZATION = 8,
  MMIMO_STATUS_OUT_OF_RANGE = 9,
  MMIMO_STATUS_PANIC = 10,
} MmimoStatus;

/**
 * Network configuration handle.
 */
typedef struct MmimoConfig MmimoConfig;

/**
 * Experiment result handle.
 */
typedef struct MmimoResult MmimoResult;

/**
 * Per-UE values. Quantities not computed by the run are NaN.
 */
typedef struct MmimoUe {
  size_t drop;
  size_t cell;
  size_t ue;
  double mean_sinr_mc;
  double sinr_std_err_mc;
  double gamma_bar;
  double se_mc;
  double se_detequiv;
} MmimoUe;

typedef struct MmimoUncorrelated {
  double nu;
  double mu_star;
  double noise;
  double non_coherent;
  double coherent;
  double gamma_bar;
} MmimoUncorrelated;

typedef struct MmimoComplexity {
  uint64_t quadratic_estimation;
  uint64_t quadratic_gamma;
  uint64_t mse_estimation;
  uint64_t mse_gamma;
} MmimoComplexity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into the library on the same thread.
 */
const char *mmimo_last_error(void);

/**
 * Creates a configuration with the built-in defaults.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MmimoStatus mmimo_config_default(struct MmimoConfig **out);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MmimoStatus mmimo_config_from_toml(const char *text, struct MmimoConfig **out);

/**
 * Sets `L`, `K` and `M`.
 *
 * # Safety
 * `config` must come from this library and not be freed.
 */
enum MmimoStatus mmimo_config_set_dims(struct MmimoConfig *config,
                                       size_t cells,
                                       size_t ues_per_cell,
                                       size_t antennas);

/**
 * # Safety
 * `config` must come from this library and not be freed.
 */
enum MmimoStatus mmimo_config_set_seed(struct MmimoConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be null or come from this library, and is invalid afterwards.
 */
void mmimo_config_free(struct MmimoConfig *config);

/**
 * Monte Carlo run over `drops` network drops of `blocks` coherence blocks.
 * `threads = 0` uses every core.
 *
 * # Safety
 * `config` must come from this library; `out` must be a valid pointer.
 */
enum MmimoStatus mmimo_run_monte_carlo(const struct MmimoConfig *config,
                                       size_t blocks,
                                       size_t drops,
                                       size_t threads,
                                       struct MmimoResult **out);

/**
 * Deterministic-equivalent run over `drops` network drops.
 *
 * # Safety
 * `config` must come from this library; `out` must be a valid pointer.
 */
enum MmimoStatus mmimo_run_detequiv(const struct MmimoConfig *config,
                                    size_t drops,
                                    size_t threads,
                                    struct MmimoResult **out);

/**
 * Number of per-UE entries in a result.
 *
 * # Safety
 * `result` must be null or come from this library.
 */
size_t mmimo_result_ue_count(const struct MmimoResult *result);

/**
 * # Safety
 * `result` must come from this library; `out` must be a valid pointer.
 */
enum MmimoStatus mmimo_result_ue(const struct MmimoResult *result,
                                 size_t index,
                                 struct MmimoUe *out);

/**
 * Average sum SE per cell; NaN for an engine that was not run.
 *
 * # Safety
 * `result` must come from this library; the outputs must be valid pointers.
 */
enum MmimoStatus mmimo_result_sum_se(const struct MmimoResult *result,
                                     double *mc,
                                     double *detequiv);

/**
 * Serializes a result as JSON. Release the string with [`mmimo_string_free`].
 *
 * # Safety
 * `result` must come from this library; `out` must be a valid pointer.
 */
enum MmimoStatus mmimo_result_to_json(const struct MmimoResult *result, char **out);

/**
 * # Safety
 * `result` must be null or come from this library, and is invalid afterwards.
 */
void mmimo_result_free(struct MmimoResult *result);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void mmimo_string_free(char *s);

/**
 * Closed form of the uncorrelated model `R_jji = I`, `R_jli = alpha I`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MmimoStatus mmimo_closed_form_uncorrelated(size_t antennas,
                                                size_t ues_per_cell,
                                                size_t cells,
                                                double alpha,
                                                double rho,
                                                double rho_tr,
                                                struct MmimoUncorrelated *out);

/**
 * Complex multiplications per coherence block for the two SINR routes.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MmimoStatus mmimo_complexity_counts(uint64_t antennas,
                                         uint64_t ues_per_cell,
                                         uint64_t cells,
                                         uint64_t tau_p,
                                         struct MmimoComplexity *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMIMO_H */
