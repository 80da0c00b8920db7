#ifndef SPATIAL_LGM_H
#define SPATIAL_LGM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Posterior output of one fit.
 */
typedef struct SlgmFit SlgmFit;

/**
 * A region adjacency graph.
 */
typedef struct SlgmGraph SlgmGraph;

/**
 * A model specification bound to validated data and a graph.
 */
typedef struct SlgmModel SlgmModel;

/**
 * Status code returned by every fallible function.
 */
typedef int32_t SlgmStatus;

typedef struct SlgmSummary {
  double mean;
  double sd;
  double q025;
  double q50;
  double q975;
} SlgmSummary;

typedef struct SlgmScores {
  double dic;
  double p_d;
  double dic_mc_se;
  double waic;
  double p_waic;
  double waic_mc_se;
  uint64_t draws;
  uint64_t seed;
} SlgmScores;

/**
 * Log-likelihood of one observation and its first two derivatives in eta.
 */
typedef struct SlgmLikTerms {
  double ll;
  double d1;
  double d2;
} SlgmLikTerms;

#define SLGM_OK 0

/**
 * A required pointer argument was NULL.
 */
#define SLGM_ERR_NULL_POINTER 1

/**
 * A string argument was not valid UTF-8.
 */
#define SLGM_ERR_INVALID_UTF8 2

/**
 * Malformed adjacency or CSV text.
 */
#define SLGM_ERR_PARSE 3

/**
 * Input that parsed but does not describe a valid model or dataset.
 */
#define SLGM_ERR_VALIDATION 4

/**
 * The approximation or a quadrature failed numerically.
 */
#define SLGM_ERR_NUMERICAL 5

#define SLGM_ERR_IO 6

/**
 * Bad configuration text.
 */
#define SLGM_ERR_CONFIG 7

/**
 * An index or name did not refer to an existing parameter.
 */
#define SLGM_ERR_OUT_OF_RANGE 8

/**
 * The output buffer cannot hold the string; the needed size was reported.
 */
#define SLGM_ERR_BUFFER_TOO_SMALL 9

/**
 * The engine panicked. Handles passed to the call should be freed and not reused.
 */
#define SLGM_ERR_PANIC 99

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *slgm_version(void);

/**
 * Message of the last failed call on this thread (empty after a success).
 *
 * Writes at most `len` bytes into `buf`. `needed`, if not NULL, receives
 * the size required including the terminating NUL. This call does not
 * overwrite the stored message.
 *
 * # Safety
 * `buf` must be NULL or valid for `len` bytes; `needed` must be NULL or valid.
 */
SlgmStatus slgm_last_error_message(char *buf, size_t len, size_t *needed);

/**
 * Parses adjacency text, one `id: neighbour neighbour ...` line per region.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out_graph` must be valid for writes.
 */
SlgmStatus slgm_graph_parse(const char *text, struct SlgmGraph **out_graph);

/**
 * Number of regions in `graph`, 0 if NULL.
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
size_t slgm_graph_region_count(const struct SlgmGraph *graph);

/**
 * # Safety
 * `graph` must be NULL or a handle not yet freed.
 */
void slgm_graph_free(struct SlgmGraph *graph);

/**
 * Builds a model from configuration text, CSV data text and a graph.
 *
 * Only the model, prior, fixed-value and grid sections of the
 * configuration are used. The graph is copied, so it may be freed afterwards.
 *
 * # Safety
 * String arguments must be NUL-terminated; `graph` must be a live handle;
 * `out_model` must be valid for writes.
 */
SlgmStatus slgm_model_new(const char *config_toml,
                          const char *data_csv,
                          const struct SlgmGraph *graph,
                          struct SlgmModel **out_model);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void slgm_model_free(struct SlgmModel *model);

/**
 * Runs the nested Laplace approximation.
 *
 * # Safety
 * `model` must be a live handle; `out_fit` must be valid for writes.
 */
SlgmStatus slgm_fit(const struct SlgmModel *model, struct SlgmFit **out_fit);

/**
 * # Safety
 * `fit` must be NULL or a handle not yet freed.
 */
void slgm_fit_free(struct SlgmFit *fit);

/**
 * Number of summarised parameters, in the order of the summaries file; 0 if NULL.
 *
 * # Safety
 * `fit` must be NULL or a live handle.
 */
size_t slgm_fit_parameter_count(const struct SlgmFit *fit);

/**
 * Name of parameter `index`, copied as for `slgm_last_error_message`.
 *
 * # Safety
 * `fit` must be a live handle; `buf` must be NULL or valid for `len` bytes;
 * `needed` must be NULL or valid.
 */
SlgmStatus slgm_fit_parameter_name(const struct SlgmFit *fit,
                                   size_t index,
                                   char *buf,
                                   size_t len,
                                   size_t *needed);

/**
 * Posterior summary of parameter `index`.
 *
 * # Safety
 * `fit` must be a live handle; `out_summary` must be valid for writes.
 */
SlgmStatus slgm_fit_summary(const struct SlgmFit *fit,
                            size_t index,
                            struct SlgmSummary *out_summary);

/**
 * Posterior summary of the parameter called `name` (for example `intercept`,
 * `gamma_<region>`, `tau`).
 *
 * # Safety
 * `fit` must be a live handle; `name` NUL-terminated; `out_summary` valid for writes.
 */
SlgmStatus slgm_fit_summary_by_name(const struct SlgmFit *fit,
                                    const char *name,
                                    struct SlgmSummary *out_summary);

/**
 * DIC and WAIC from `draws` mixture draws. Results depend only on `seed`.
 *
 * # Safety
 * `fit` and `model` must be live handles, `fit` produced from `model`;
 * `out_scores` must be valid for writes.
 */
SlgmStatus slgm_fit_scores(const struct SlgmFit *fit,
                           const struct SlgmModel *model,
                           size_t draws,
                           uint64_t seed,
                           struct SlgmScores *out_scores);

/**
 * Writes the summaries, marginals, hyperparameter grid and latent files
 * into the existing directory `dir`.
 *
 * # Safety
 * `fit` must be a live handle; `dir` NUL-terminated.
 */
SlgmStatus slgm_fit_write(const struct SlgmFit *fit, const char *dir);

/**
 * Bernoulli-logit log-likelihood terms for outcome `y` (0 or 1).
 *
 * # Safety
 * `out_terms` must be valid for writes.
 */
SlgmStatus slgm_bernoulli_logit_terms(double eta, uint8_t y, struct SlgmLikTerms *out_terms);

/**
 * Weibull AFT log-likelihood terms for time `t` with `event` 1 (observed) or 0 (censored).
 *
 * # Safety
 * `out_terms` must be valid for writes.
 */
SlgmStatus slgm_weibull_terms(double eta,
                              double alpha,
                              double t,
                              uint8_t event,
                              struct SlgmLikTerms *out_terms);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPATIAL_LGM_H */
