#ifndef FRAGSIM_H
#define FRAGSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum FsStatus {
  FS_STATUS_OK = 0,
  FS_STATUS_NULL_POINTER = 1,
  FS_STATUS_INVALID_ARGUMENT = 2,
  FS_STATUS_CONFIG = 3,
  FS_STATUS_SIMULATION = 4,
  FS_STATUS_PANIC = 5,
} FsStatus;

typedef enum FsVariant {
  FS_VARIANT_BEST_GUESS = 0,
  FS_VARIANT_MARKET_SIM = 1,
  FS_VARIANT_MARKET_SIM_WITH_ROUTING_BUG = 2,
} FsVariant;

/*
 Per-mixture groups of one metric.
 */
typedef struct FsSample FsSample;

/*
 A resolved experiment.
 */
typedef struct FsSpec FsSpec;

/*
 Metrics of one run.
 */
typedef struct FsRunResult {
  uint64_t mixture_idx;
  uint64_t run_idx;
  uint64_t seed;
  double zi_surplus;
  double la_surplus;
  double nbbo_spread_median;
  double bbo_spread_mean_median;
  double exec_time_mean;
  uint64_t zi_tx;
  uint64_t la_tx;
} FsRunResult;

/*
 Bootstrap summary at the 95% and 99% levels.
 */
typedef struct FsBootstrap {
  double mean;
  double se;
  double lower95;
  double upper95;
  double lower99;
  double upper99;
} FsBootstrap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null. The pointer stays
 valid until the next failing call on this thread.
 */
const char *fs_last_error(void);

/*
 Library version as a static string.
 */
const char *fs_version(void);

/*
 Spec for a built-in experiment id such as `env3-cda`. `variant` is an
 [`FsVariant`] value.

 # Safety

 `id` must be a valid C string and `out` a valid pointer.
 */
enum FsStatus fs_spec_builtin(const char *id,
                              uint32_t variant,
                              uint64_t mixtures,
                              uint64_t runs,
                              uint64_t seed,
                              struct FsSpec **out);

/*
 Spec from the text of a TOML experiment file.

 # Safety

 `toml` must be a valid C string and `out` a valid pointer.
 */
enum FsStatus fs_spec_from_toml(const char *toml, struct FsSpec **out);

/*
 # Safety

 `spec` must come from this library and not be used afterwards. Null is
 ignored.
 */
void fs_spec_free(struct FsSpec *spec);

/*
 Run cell `(mixture_idx, run_idx)` of `spec`. The result equals the
 corresponding row of a full experiment run.

 # Safety

 `spec` must be a live handle and `out` a valid pointer.
 */
enum FsStatus fs_run_simulation(const struct FsSpec *spec,
                                uint64_t mixture_idx,
                                uint64_t run_idx,
                                struct FsRunResult *out);

/*
 Grouped sample from a flat value array: the first `group_lens[0]` values
 belong to mixture 0, the next `group_lens[1]` to mixture 1, and so on.

 # Safety

 `values` must hold the sum of `group_lens` entries, `group_lens` must
 hold `n_groups` entries, and `out` must be a valid pointer.
 */
enum FsStatus fs_sample_new(const double *values,
                            const size_t *group_lens,
                            size_t n_groups,
                            struct FsSample **out);

/*
 # Safety

 `sample` must come from this library and not be used afterwards. Null
 is ignored.
 */
void fs_sample_free(struct FsSample *sample);

/*
 Mixture-level bootstrap with `b` resamples of `draw_size` mixtures,
 driven by a ChaCha8 stream seeded with `seed`.

 # Safety

 `sample` must be a live handle and `out` a valid pointer.
 */
enum FsStatus fs_bootstrap_ci(const struct FsSample *sample,
                              size_t b,
                              size_t draw_size,
                              uint64_t seed,
                              struct FsBootstrap *out);

/*
 Two-sided one-sample t-test p-value of `mean == target`.

 # Safety

 `values` must hold `n` entries and `p_value` must be a valid pointer.
 */
enum FsStatus fs_t_test(const double *values, size_t n, double target, double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRAGSIM_H */
