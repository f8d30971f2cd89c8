/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the neuropmd library.
 *
 * Every function returning npmd_status reports failures through the status
 * code; npmd_last_error() then describes the most recent failure on the
 * calling thread. Objects are opaque handles released with the matching
 * *_free function. Point arrays are row-major, one point per row, in the
 * storage layout of the manifold (circle: one angle in [-pi, pi); sphere:
 * three coordinates of a unit vector).
 */
#ifndef NEUROPMD_NEUROPMD_H
#define NEUROPMD_NEUROPMD_H

#include <stddef.h>
#include <stdint.h>

#if defined(NEUROPMD_BUILDING_LIBRARY)
#define NPMD_API __attribute__((visibility("default")))
#else
#define NPMD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum npmd_status {
  NPMD_OK = 0,
  NPMD_ERR_INVALID = 1, /* bad argument (null pointer, size mismatch) */
  NPMD_ERR_CONFIG = 2,  /* invalid configuration or input data */
  NPMD_ERR_NUMERIC = 3, /* divergence or another numerical failure */
  NPMD_ERR_IO = 4       /* file could not be read or written */
} npmd_status;

typedef enum npmd_model_kind {
  NPMD_MODEL_NEUROPMD = 0,
  NPMD_MODEL_TPB = 1,
  NPMD_MODEL_KDE = 2
} npmd_model_kind;

typedef struct npmd_dataset npmd_dataset;
typedef struct npmd_mixture npmd_mixture;
typedef struct npmd_model npmd_model;
typedef struct npmd_density npmd_density;

NPMD_API const char* npmd_version(void);
NPMD_API const char* npmd_last_error(void);

/* Datasets */
NPMD_API npmd_status npmd_dataset_load(const char* path, npmd_dataset** out);
NPMD_API npmd_status npmd_dataset_save(const npmd_dataset* ds, const char* path);
/* manifold_json: [{"kind": "circle"}, {"kind": "sphere2"}, ...] */
NPMD_API npmd_status npmd_dataset_from_points(const char* manifold_json, const double* points, size_t n,
                                              npmd_dataset** out);
NPMD_API size_t npmd_dataset_size(const npmd_dataset* ds);
/* Number of storage coordinates per point. */
NPMD_API int npmd_dataset_dim(const npmd_dataset* ds);
NPMD_API npmd_status npmd_dataset_manifold_json(const npmd_dataset* ds, char* buf, size_t cap);
NPMD_API npmd_status npmd_dataset_copy_points(const npmd_dataset* ds, double* out, size_t capacity);
NPMD_API void npmd_dataset_free(npmd_dataset* ds);

/* Wrapped-normal mixtures on tori */
NPMD_API npmd_status npmd_mixture_preset(const char* name, uint64_t seed, npmd_mixture** out);
NPMD_API npmd_status npmd_mixture_load(const char* path, npmd_mixture** out);
NPMD_API npmd_status npmd_mixture_save(const npmd_mixture* mix, const char* path);
NPMD_API npmd_status npmd_mixture_sample(const npmd_mixture* mix, size_t n, uint64_t seed, npmd_dataset** out);
NPMD_API void npmd_mixture_free(npmd_mixture* mix);

/* Training. config_json is a run configuration; seed may be NULL when the
 * configuration carries its own. resume may be NULL. history_path, when not
 * NULL, receives the per-epoch history as CSV. */
NPMD_API npmd_status npmd_train(const char* config_json, const uint64_t* seed, const npmd_dataset* data,
                                const npmd_model* resume, const char* history_path, npmd_model** out);
/* Trains once per entry of the configuration's tau grid, keeps the best.
 * criteria_path, when not NULL, receives one CSV row per tau. */
NPMD_API npmd_status npmd_select_tau(const char* config_json, const uint64_t* seed, const npmd_dataset* data,
                                     const char* criteria_path, const char* history_path, double* tau_out,
                                     npmd_model** out);
/* Cross-validated von Mises KDE. data_file is recorded for npmd_model_save.
 * scores_out (nullable) receives grid_len fold-averaged criteria. */
NPMD_API npmd_status npmd_fit_kde(const npmd_dataset* data, const char* data_file, const double* kappa_grid,
                                  size_t grid_len, int folds, uint64_t seed, const char* integrator,
                                  double* scores_out, npmd_model** out);
NPMD_API npmd_status npmd_kde_create(const npmd_dataset* data, const char* data_file, double kappa,
                                     npmd_model** out);
/* Tensor-product basis fit. train_json holds TrainConfig fields. */
NPMD_API npmd_status npmd_fit_tpb(const npmd_dataset* data, const int* max_freq, size_t dims,
                                  const char* train_json, uint64_t init_seed, int penalty_exponent,
                                  const char* history_path, npmd_model** out);

/* Models */
NPMD_API npmd_status npmd_model_load(const char* path, npmd_model** out);
NPMD_API npmd_status npmd_model_save(const npmd_model* model, const char* path);
NPMD_API npmd_model_kind npmd_model_kind_of(const npmd_model* model);
NPMD_API int npmd_model_epoch(const npmd_model* model);
NPMD_API double npmd_model_kappa(const npmd_model* model);
NPMD_API npmd_status npmd_model_log_density(const npmd_model* model, const double* points, size_t n, double* out);
/* Gradient SNR of a field model on a data batch drawn from data.
 * train_json supplies tau, batch_size, q1, q2, penalty and seed. out[3] = a, b, c. */
NPMD_API npmd_status npmd_model_snr(const npmd_model* model, const npmd_dataset* data, const char* train_json,
                                    double* out);
NPMD_API void npmd_model_free(npmd_model* model);

/* Density handles */
NPMD_API npmd_status npmd_density_from_mixture(const npmd_mixture* mix, npmd_density** out);
NPMD_API npmd_status npmd_density_from_model(const npmd_model* model, npmd_density** out);
NPMD_API npmd_status npmd_density_uniform(const char* manifold_json, npmd_density** out);
NPMD_API npmd_status npmd_density_eval(const npmd_density* f, const double* points, size_t n, double* out);
NPMD_API npmd_status npmd_density_manifold_json(const npmd_density* f, char* buf, size_t cap);
NPMD_API void npmd_density_free(npmd_density* f);

/* Metrics. integrator: "grid:256", "mc:4096" or "qmc:4096". */
NPMD_API npmd_status npmd_integral(const npmd_density* f, const char* integrator, uint64_t seed, double* out);
NPMD_API npmd_status npmd_nise(const npmd_density* truth, const npmd_density* est, const char* integrator,
                               uint64_t seed, double* out);
/* convention: "as_written", "inner" or "geodesic". */
NPMD_API npmd_status npmd_fisher_rao(const npmd_density* truth, const npmd_density* est, const char* integrator,
                                     uint64_t seed, const char* convention, double* out);
NPMD_API npmd_status npmd_ise_criterion(const npmd_density* est, const npmd_dataset* validation,
                                        const char* integrator, uint64_t seed, double* out);
/* region_json: {"type": "all"} | {"type": "arc", "lo": a, "hi": b}
 *            | {"type": "cap", "center": [x, y, z], "angle": r}, optional "complement": true.
 * x2 holds n points of the second marginal; the integrator acts on the first. */
NPMD_API npmd_status npmd_marginal_density(const npmd_density* f, const char* region_json, const char* integrator,
                                           uint64_t seed, const double* x2, size_t n, double* out);
/* res x res row-major outputs on T^2. log_quantity selects log density. */
NPMD_API npmd_status npmd_grid_values(const npmd_density* f, int res, int log_quantity, double* out);
NPMD_API npmd_status npmd_spectrum(const npmd_density* f, int res, int log_quantity, double* out);

#ifdef __cplusplus
}
#endif

#endif /* NEUROPMD_NEUROPMD_H */
