/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef MDIQKD_H
#define MDIQKD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of an FFI call.
typedef enum MdiqkdStatus {
  MDIQKD_STATUS_OK = 0,
  MDIQKD_STATUS_NULL_POINTER = 1,
  // Bad key, value, parameter or intensity ordering.
  MDIQKD_STATUS_INVALID_ARGUMENT = 2,
  // Non-finite result or empty feasible set.
  MDIQKD_STATUS_NUMERICAL = 3,
  MDIQKD_STATUS_IO = 4,
  MDIQKD_STATUS_PANIC = 5,
} MdiqkdStatus;

typedef enum MdiqkdBasis {
  MDIQKD_BASIS_Z = 0,
  MDIQKD_BASIS_X = 1,
} MdiqkdBasis;

// Opaque configuration handle.
typedef struct MdiqkdConfig MdiqkdConfig;

// Signal, decoy and weakest-decoy intensities of both parties.
typedef struct MdiqkdIntensities {
  double mu_a;
  double nu_a;
  double omega_a;
  double mu_b;
  double nu_b;
  double omega_b;
} MdiqkdIntensities;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until
// the next call into this library on the same thread.
const char *mdiqkd_last_error(void);

// Library version as a static NUL-terminated string.
const char *mdiqkd_version(void);

// New handle with the reference parameters. Free with [`mdiqkd_config_free`].
struct MdiqkdConfig *mdiqkd_config_new(void);

// Loads a `key = value` config file over the reference parameters.
//
// # Safety
// `path` must be a valid C string and `out` a valid pointer.
enum MdiqkdStatus mdiqkd_config_load(const char *path, struct MdiqkdConfig **out);

// Sets one key (for example `system.e_d`) from its text value.
//
// # Safety
// `cfg` must come from this library; `key` and `value` must be valid C strings.
enum MdiqkdStatus mdiqkd_config_set(struct MdiqkdConfig *cfg, const char *key, const char *value);

// # Safety
// `cfg` must come from this library (or be null) and not be used afterwards.
void mdiqkd_config_free(struct MdiqkdConfig *cfg);

// Gain and QBER of one basis at signal intensities `mu_a`, `mu_b`.
//
// # Safety
// Pointers must be valid.
enum MdiqkdStatus mdiqkd_gain_qber(const struct MdiqkdConfig *cfg,
                                   enum MdiqkdBasis basis,
                                   double l_ac_km,
                                   double l_bc_km,
                                   double mu_a,
                                   double mu_b,
                                   double *gain,
                                   double *qber);

// Asymptotic key rate (floored at zero) with perfect decoy estimation.
//
// # Safety
// Pointers must be valid.
enum MdiqkdStatus mdiqkd_asymptotic_rate(const struct MdiqkdConfig *cfg,
                                         double l_ac_km,
                                         double l_bc_km,
                                         double mu_a,
                                         double mu_b,
                                         double *rate);

// Key rate from two-decoy bounds on simulated gains.
//
// # Safety
// Pointers must be valid.
enum MdiqkdStatus mdiqkd_two_decoy_rate(const struct MdiqkdConfig *cfg,
                                        double l_ac_km,
                                        double l_bc_km,
                                        const struct MdiqkdIntensities *intensities,
                                        double *rate);

// Optimal intensities using the handle's `rate.mode`, `optimize.coupling`,
// `bounds.*` and `search.*` settings. In asymptotic mode only `mu_a` and
// `mu_b` are meaningful.
//
// # Safety
// Pointers must be valid.
enum MdiqkdStatus mdiqkd_optimize(const struct MdiqkdConfig *cfg,
                                  double l_ac_km,
                                  double l_bc_km,
                                  struct MdiqkdIntensities *best,
                                  double *rate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDIQKD_H */
