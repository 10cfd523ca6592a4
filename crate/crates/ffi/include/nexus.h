/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef NEXUS_H
#define NEXUS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NexusStatus {
  NEXUS_STATUS_OK = 0,
  NEXUS_STATUS_NULL_POINTER = 1,
  NEXUS_STATUS_INVALID_ARGUMENT = 2,
  NEXUS_STATUS_NUMERICAL = 3,
  NEXUS_STATUS_IO = 4,
  NEXUS_STATUS_UNSUPPORTED = 5,
  NEXUS_STATUS_PANIC = 6,
} NexusStatus;

// Grouped data set.
typedef struct NexusDataset NexusDataset;

// Summaries of a finished chain.
typedef struct NexusTrace NexusTrace;

// Sampler settings. Fill with [`nexus_hyper_defaults`] and adjust.
typedef struct NexusHyper {
  double alpha1;
  double beta1;
  double alpha2;
  double beta2;
  double alpha_gamma;
  double beta_gamma;
  double delta;
  double kappa;
  size_t n_iterations;
  size_t n_burnin;
  uint64_t seed;
  bool independent_mode;
} NexusHyper;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buffer` (truncated
// and NUL-terminated when `buffer_len > 0`) and returns the full message
// length in bytes, excluding the NUL. Returns 0 when the last call succeeded.
//
// # Safety
// `buffer` must be null or valid for `buffer_len` bytes.
size_t nexus_last_error_message(char *buffer, size_t buffer_len);

// Builds a data set from `n_groups` row-major blocks stored back to back in
// `values`; block `c` has `sizes[c]` rows and `p` columns. Columns are
// centered per group, and also scaled to unit variance when `scale` is set.
//
// # Safety
// `sizes` must hold `n_groups` entries, `values` `p · Σ sizes` entries, and
// `out` must be a valid place to store the handle.
enum NexusStatus nexus_dataset_new(size_t n_groups,
                                   const size_t *sizes,
                                   size_t p,
                                   const double *values,
                                   bool scale,
                                   struct NexusDataset **out);

// Loads a `label,path` group manifest.
//
// # Safety
// `manifest` must be a NUL-terminated path and `out` a valid place to store
// the handle.
enum NexusStatus nexus_dataset_load(const char *manifest, bool scale, struct NexusDataset **out);

// # Safety
// `dataset` must be null or a handle from this library not yet freed.
void nexus_dataset_free(struct NexusDataset *dataset);

// # Safety
// `dataset` must be a live handle; the outputs must be valid or null.
enum NexusStatus nexus_dataset_dims(const struct NexusDataset *dataset,
                                    size_t *n_groups,
                                    size_t *p);

// Default settings for groups of the given sizes.
//
// # Safety
// `sizes` must hold `n_groups` entries and `out` must be valid.
enum NexusStatus nexus_hyper_defaults(const size_t *sizes, size_t n_groups, struct NexusHyper *out);

// Runs the sampler with the stream seeded by `hyper->seed`.
//
// # Safety
// `dataset` and `hyper` must be valid and `out` a valid place to store the
// handle.
enum NexusStatus nexus_fit(const struct NexusDataset *dataset,
                           const struct NexusHyper *hyper,
                           struct NexusTrace **out);

// # Safety
// `trace` must be null or a handle from this library not yet freed.
void nexus_trace_free(struct NexusTrace *trace);

// # Safety
// `trace` must be a live handle; the outputs must be valid.
enum NexusStatus nexus_trace_dims(const struct NexusTrace *trace,
                                  size_t *n_groups,
                                  size_t *p,
                                  size_t *n_edges);

// Posterior probability that `|ρ_ij| > kappa`, `n_groups · n_edges` values.
//
// # Safety
// `trace` must be live and `out` valid for `len` doubles.
enum NexusStatus nexus_edge_inclusion(const struct NexusTrace *trace,
                                      double kappa,
                                      double *out,
                                      size_t len);

// Posterior mean of `|ρ_ij|`, `n_groups · n_edges` values.
//
// # Safety
// `trace` must be live and `out` valid for `len` doubles.
enum NexusStatus nexus_posterior_mean_abs_partial_corr(const struct NexusTrace *trace,
                                                       double *out,
                                                       size_t len);

// Similarity index and its min-max normalization for each group pair
// `(0,1), (0,2), …`. Fails with `Unsupported` for independent-mode traces.
//
// # Safety
// `trace` must be live and both outputs valid for `len` doubles.
enum NexusStatus nexus_similarity(const struct NexusTrace *trace,
                                  double *nsi,
                                  double *nnsi,
                                  size_t len);

// `n̄^δ · n_c^(1−δ)` for each of the `len` sizes.
//
// # Safety
// `sizes` and `out` must be valid for `len` entries.
enum NexusStatus nexus_effective_sample_sizes(const size_t *sizes,
                                              size_t len,
                                              double delta,
                                              double *out);

// Area under the ROC curve with ties counted as one half. A nonzero label is
// a positive.
//
// # Safety
// `scores` and `labels` must be valid for `len` entries and `out` valid.
enum NexusStatus nexus_roc_auc(const double *scores,
                               const uint8_t *labels,
                               size_t len,
                               double *out);

// Library version as a static NUL-terminated string.
const char *nexus_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEXUS_H */
