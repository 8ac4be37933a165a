#ifndef HBIAS_H
#define HBIAS_H

/* C interface to the hbias library. Every function returns an hb_status;
 * on failure hb_last_error() describes the problem (thread-local, valid until
 * the next call on the same thread). Strings returned through char** are
 * owned by the caller and released with hb_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(HBIAS_BUILDING)
#define HB_API __attribute__((visibility("default")))
#else
#define HB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  HB_OK = 0,
  HB_ERR_INVALID_ARGUMENT = 1,
  HB_ERR_DIMENSION = 2,
  HB_ERR_DOMAIN = 3,
  HB_ERR_CONFIG = 4,
  HB_ERR_IO = 5,
  HB_ERR_NUMERICAL = 6, /* non-finite iterate; a partial trajectory may be returned */
  HB_ERR_INTERNAL = 7
} hb_status;

typedef struct hb_dataset hb_dataset;
typedef struct hb_config hb_config;
typedef struct hb_trajectory hb_trajectory;

HB_API const char* hb_version(void);
HB_API const char* hb_last_error(void);
HB_API const char* hb_status_name(hb_status s);
HB_API void hb_string_free(char* s);

/* datasets */
HB_API hb_status hb_dataset_gen_linear(uint64_t seed, size_t n, size_t d, double margin,
                                       double radius, int symmetric, hb_dataset** out);
HB_API hb_status hb_dataset_gen_xor_ring(uint64_t seed, size_t n, hb_dataset** out);
HB_API hb_status hb_dataset_load_csv(const char* path, hb_dataset** out);
/* Writes the CSV and "<stem>.meta.json" beside it. */
HB_API hb_status hb_dataset_save(const hb_dataset* data, const char* csv_path);
HB_API size_t hb_dataset_size(const hb_dataset* data);
HB_API size_t hb_dataset_dim(const hb_dataset* data);
HB_API hb_status hb_dataset_sample(const hb_dataset* data, size_t i, double* x, double* y);
HB_API hb_status hb_dataset_meta_json(const hb_dataset* data, char** out);
HB_API void hb_dataset_free(hb_dataset* data);

/* experiment configs (JSON schema documented in hbias/io.hpp and the README) */
HB_API hb_status hb_config_from_json(const char* text, hb_config** out);
HB_API hb_status hb_config_load(const char* path, hb_config** out);
HB_API hb_status hb_config_to_json(const hb_config* cfg, char** out);
HB_API size_t hb_config_num_params(const hb_config* cfg);
HB_API void hb_config_free(hb_config* cfg);

/* training. On HB_ERR_NUMERICAL *out receives the partial trajectory (its
 * final weights are the last finite iterate) when one is available. */
HB_API hb_status hb_train(const hb_config* cfg, const hb_dataset* data, hb_trajectory** out);
HB_API hb_status hb_trajectory_write(const hb_trajectory* traj, const char* dir);
HB_API hb_status hb_trajectory_read(const char* dir, hb_trajectory** out);
/* 1 and *k_sep set when separation was detected, 0 otherwise. */
HB_API int hb_trajectory_k_sep(const hb_trajectory* traj, uint64_t* k_sep);
HB_API double hb_trajectory_final_margin(const hb_trajectory* traj);
HB_API size_t hb_trajectory_num_records(const hb_trajectory* traj);
HB_API size_t hb_trajectory_num_params(const hb_trajectory* traj);
HB_API hb_status hb_trajectory_final_weights(const hb_trajectory* traj, double* out, size_t len);
/* {aborted, reason, last_k, final_weights, ...} */
HB_API hb_status hb_trajectory_diagnostic_json(const hb_trajectory* traj, char** out);
HB_API void hb_trajectory_free(hb_trajectory* traj);

typedef struct {
  double active_tol;  /* <= 0: library default */
  int has_window;     /* nonzero: use [window_lo, window_hi] for the growth fit */
  uint64_t window_lo;
  uint64_t window_hi;
} hb_analysis_options;

/* Either output pointer may be NULL. */
HB_API hb_status hb_analyze(const hb_trajectory* traj, const hb_dataset* data,
                            const hb_analysis_options* opts, char** summary_json,
                            char** analysis_csv);

/* Criticality report of w (network and kink from cfg) as JSON. */
HB_API hb_status hb_criticality(const hb_config* cfg, const double* w, size_t len,
                                const hb_dataset* data, double active_tol, char** out_json);

/* Euler discretisation of the spherical margin flow from u0 (normalised;
 * NULL: the config's seeded initial weights). Writes the path CSV. */
HB_API hb_status hb_flow(const hb_config* cfg, const hb_dataset* data, const double* u0,
                         size_t len, double step, double horizon, double tol, char** path_csv,
                         int* converged, double* final_residual);

typedef struct {
  size_t cases;
  size_t fd_cases;
  double max_euler_error;
  double max_homogeneity_error;
  double max_fd_error;
  int passed;
} hb_grad_report;

/* widths: d_in, hidden..., 1. activation: "relu", "leaky_relu", "linear". */
HB_API hb_status hb_check_grad(const size_t* widths, size_t num_widths, const char* activation,
                               double slope, uint64_t seed, size_t cases, int inject_fault,
                               hb_grad_report* report);

HB_API hb_status hb_timestamp(char** out);
/* Manifest JSON for a run; hashes are recomputed from the files. */
HB_API hb_status hb_manifest_json(const char* config_path, const char* dataset_path,
                                  const char* output_dir, const char* started_at, char** out);

#ifdef __cplusplus
}
#endif

#endif /* HBIAS_H */
