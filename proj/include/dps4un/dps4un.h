/* C interface to the dps4un unmixing library.
 *
 * Every function returns a dps4un_status; on failure a thread-local message
 * is available from dps4un_last_error(). Objects are opaque handles released
 * with the matching *_free function (NULL is accepted). Matrices exchanged
 * through this interface are row-major doubles; cubes are pixel-major floats
 * (row by row over the image, all bands of a pixel contiguous).
 */
#ifndef DPS4UN_DPS4UN_H
#define DPS4UN_DPS4UN_H

#include <stddef.h>
#include <stdint.h>

#if defined(DPS4UN_BUILDING_LIBRARY)
#define DPS4UN_API __attribute__((visibility("default")))
#else
#define DPS4UN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dps4un_status {
  DPS4UN_OK = 0,
  DPS4UN_ERR_INVALID_ARGUMENT = 1,
  DPS4UN_ERR_IO = 2,
  DPS4UN_ERR_FORMAT = 3,
  DPS4UN_ERR_DIMENSION = 4,
  DPS4UN_ERR_NUMERIC = 5,
  DPS4UN_ERR_INTERNAL = 6
} dps4un_status;

typedef struct dps4un_cube dps4un_cube;
typedef struct dps4un_matrix dps4un_matrix;
typedef struct dps4un_segmentation dps4un_segmentation;
typedef struct dps4un_library dps4un_library;
typedef struct dps4un_model dps4un_model;
typedef struct dps4un_result dps4un_result;
typedef struct dps4un_report dps4un_report;

DPS4UN_API const char* dps4un_version(void);
DPS4UN_API const char* dps4un_status_string(dps4un_status status);
/* Message of the last failed call on this thread; "" when none. */
DPS4UN_API const char* dps4un_last_error(void);
/* Worker threads for parallel stages. n <= 0 reads DPS4UN_THREADS from the
 * environment and falls back to the runtime default. */
DPS4UN_API dps4un_status dps4un_set_threads(int n);
DPS4UN_API void dps4un_string_free(char* s);

/* ---- cubes ---- */
DPS4UN_API dps4un_status dps4un_cube_create(size_t height, size_t width, size_t bands, const float* data,
                                            dps4un_cube** out);
DPS4UN_API dps4un_status dps4un_cube_load(const char* path, dps4un_cube** out);
DPS4UN_API dps4un_status dps4un_cube_save(const dps4un_cube* cube, const char* path);
/* Global min-max scaling to [0, 1]. */
DPS4UN_API dps4un_status dps4un_cube_normalize(const dps4un_cube* cube, dps4un_cube** out);
DPS4UN_API dps4un_status dps4un_cube_shape(const dps4un_cube* cube, size_t* height, size_t* width, size_t* bands);
DPS4UN_API const float* dps4un_cube_data(const dps4un_cube* cube);
DPS4UN_API void dps4un_cube_free(dps4un_cube* cube);

/* ---- matrices ---- */
DPS4UN_API dps4un_status dps4un_matrix_create(size_t rows, size_t cols, const double* data, dps4un_matrix** out);
DPS4UN_API dps4un_status dps4un_matrix_load(const char* path, dps4un_matrix** out);
/* kind: "matrix", "endmembers", "abundances", ...; NULL means "matrix". */
DPS4UN_API dps4un_status dps4un_matrix_save(const dps4un_matrix* m, const char* path, const char* kind);
DPS4UN_API dps4un_status dps4un_matrix_shape(const dps4un_matrix* m, size_t* rows, size_t* cols);
/* Copies rows*cols values; `count` must equal rows*cols. */
DPS4UN_API dps4un_status dps4un_matrix_copy(const dps4un_matrix* m, double* out, size_t count);
DPS4UN_API void dps4un_matrix_free(dps4un_matrix* m);

/* ---- synthetic scenes ---- */
typedef struct dps4un_synth_params {
  size_t height;
  size_t width;
  int bands;
  int endmembers;
  double snr_db; /* INFINITY for a noiseless cube */
  double variability;
  int abundance_block;
  int variability_block;
  double dirichlet_alpha;
  uint64_t seed;
} dps4un_synth_params;

DPS4UN_API void dps4un_synth_default_params(dps4un_synth_params* p);
/* Any of the outputs may be NULL. endmembers: bands x K; abundances: K x pixels. */
DPS4UN_API dps4un_status dps4un_synth(const dps4un_synth_params* p, dps4un_cube** cube, dps4un_matrix** endmembers,
                                      dps4un_matrix** abundances);
DPS4UN_API dps4un_status dps4un_synth_save(const dps4un_synth_params* p, const char* dir);

/* ---- segmentation ---- */
typedef struct dps4un_slic_params {
  int target_regions;
  double compactness;
  int iterations;
  int squared_spectral;
  int enforce_connectivity;
  uint64_t seed;
} dps4un_slic_params;

DPS4UN_API void dps4un_slic_default_params(dps4un_slic_params* p);
DPS4UN_API dps4un_status dps4un_segment(const dps4un_cube* cube, const dps4un_slic_params* p,
                                        dps4un_segmentation** out);
DPS4UN_API dps4un_status dps4un_segmentation_create(size_t height, size_t width, const int32_t* labels,
                                                    dps4un_segmentation** out);
/* Absorbs regions smaller than min_pixels into their largest neighbour. */
DPS4UN_API dps4un_status dps4un_segmentation_merge_small(const dps4un_segmentation* seg, size_t min_pixels,
                                                         dps4un_segmentation** out);
DPS4UN_API dps4un_status dps4un_segmentation_load(const char* path, dps4un_segmentation** out);
DPS4UN_API dps4un_status dps4un_segmentation_save(const dps4un_segmentation* seg, const char* path);
DPS4UN_API dps4un_status dps4un_segmentation_write_pgm(const dps4un_segmentation* seg, const char* path);
DPS4UN_API dps4un_status dps4un_segmentation_write_csv(const dps4un_segmentation* seg, const char* path);
DPS4UN_API dps4un_status dps4un_segmentation_info(const dps4un_segmentation* seg, size_t* height, size_t* width,
                                                  int* region_count);
DPS4UN_API dps4un_status dps4un_segmentation_labels(const dps4un_segmentation* seg, int32_t* out, size_t count);
DPS4UN_API void dps4un_segmentation_free(dps4un_segmentation* seg);

/* ---- spectral library ---- */
DPS4UN_API dps4un_status dps4un_build_library(const dps4un_cube* cube, const dps4un_segmentation* seg, int k,
                                              uint64_t seed, dps4un_library** out);
DPS4UN_API dps4un_status dps4un_library_assign_clusters(const dps4un_library* lib, int clusters, uint64_t seed,
                                                        dps4un_library** out);
DPS4UN_API dps4un_status dps4un_library_load(const char* path, dps4un_library** out);
DPS4UN_API dps4un_status dps4un_library_save(const dps4un_library* lib, const char* path);
DPS4UN_API dps4un_status dps4un_library_write_csv(const dps4un_library* lib, const char* path);
/* clusters is 0 until assign_clusters has run. */
DPS4UN_API dps4un_status dps4un_library_info(const dps4un_library* lib, size_t* entries, size_t* bands,
                                             int* per_region, int* clusters);
DPS4UN_API void dps4un_library_free(dps4un_library* lib);

/* ---- diffusion prior ---- */
typedef struct dps4un_train_params {
  int steps;
  int batch;
  double lr;
  double ema_decay;
  double dropout;
  int stages;
  int hidden;
  int time_dim;
  int label_dim;
  int diffusion_steps;
  double beta_start;
  double beta_end;
  uint64_t seed;
} dps4un_train_params;

DPS4UN_API void dps4un_train_default_params(dps4un_train_params* p);
/* The library must be clustered. loss_csv may be NULL. */
DPS4UN_API dps4un_status dps4un_train(const dps4un_library* lib, const dps4un_train_params* p, const char* loss_csv,
                                      dps4un_model** out);
/* expected_bands <= 0 skips the band check. */
DPS4UN_API dps4un_status dps4un_model_load(const char* path, int expected_bands, dps4un_model** out);
DPS4UN_API dps4un_status dps4un_model_save(const dps4un_model* model, const char* path);
DPS4UN_API dps4un_status dps4un_model_info(const dps4un_model* model, int* bands, int* clusters,
                                           size_t* parameters);
DPS4UN_API void dps4un_model_free(dps4un_model* model);

/* ---- unmixing ---- */
typedef struct dps4un_unmix_params {
  int ddim_steps;
  double eta;
  double lambda;
  double fidelity_scale;
  int pgd_inner;
  int fclsu_iterations;
  int cold_start;
  int record_trajectory;
  uint64_t seed;
} dps4un_unmix_params;

DPS4UN_API void dps4un_unmix_default_params(dps4un_unmix_params* p);
/* Slot conditions come from the clustered library built on `seg`. */
DPS4UN_API dps4un_status dps4un_unmix(const dps4un_cube* cube, const dps4un_segmentation* seg,
                                      const dps4un_model* model, const dps4un_library* lib,
                                      const dps4un_unmix_params* p, dps4un_result** out);
DPS4UN_API dps4un_status dps4un_result_abundances(const dps4un_result* r, dps4un_matrix** out);
DPS4UN_API dps4un_status dps4un_result_endmembers(const dps4un_result* r, dps4un_matrix** mean,
                                                  dps4un_matrix** std);
/* Endmembers (bands x K) sampled for one region. */
DPS4UN_API dps4un_status dps4un_result_region_endmembers(const dps4un_result* r, int region, dps4un_matrix** out);
/* Writes abundances, endmember statistics and trajectory files into dir. */
DPS4UN_API dps4un_status dps4un_result_save(const dps4un_result* r, const char* dir);
DPS4UN_API void dps4un_result_free(dps4un_result* r);

/* Global VCA endmembers plus constrained least-squares abundances. */
DPS4UN_API dps4un_status dps4un_baseline(const dps4un_cube* cube, int k, uint64_t seed, dps4un_matrix** endmembers,
                                         dps4un_matrix** abundances);

/* ---- evaluation ---- */
/* Abundance arguments may both be NULL to score endmembers only. */
DPS4UN_API dps4un_status dps4un_evaluate(const dps4un_matrix* est_endmembers, const dps4un_matrix* est_abundances,
                                         const dps4un_matrix* ref_endmembers, const dps4un_matrix* ref_abundances,
                                         dps4un_report** out);
DPS4UN_API dps4un_status dps4un_report_metrics(const dps4un_report* r, double* armse, double* asad);
/* matching[k] = reference index of estimated endmember k; count = K. */
DPS4UN_API dps4un_status dps4un_report_matching(const dps4un_report* r, int* matching, size_t count);
/* Newly allocated strings; release with dps4un_string_free. */
DPS4UN_API dps4un_status dps4un_report_json(const dps4un_report* r, char** out);
DPS4UN_API dps4un_status dps4un_report_table(const dps4un_report* r, char** out);
DPS4UN_API void dps4un_report_free(dps4un_report* r);

/* ---- rendering ---- */
DPS4UN_API dps4un_status dps4un_render_abundances(const dps4un_matrix* abundances, size_t height, size_t width,
                                                  const char* dir, const char* prefix);
DPS4UN_API dps4un_status dps4un_render_trajectory(const char* trajectory_csv, const char* dir);

/* ---- end-to-end ---- */
/* Runs the full pipeline from a JSON configuration. Relative paths resolve
 * against base_dir (NULL: current directory). manifest may be NULL. */
DPS4UN_API dps4un_status dps4un_run_pipeline(const char* config_json, const char* base_dir, char** manifest);

#ifdef __cplusplus
}
#endif

#endif /* DPS4UN_DPS4UN_H */
