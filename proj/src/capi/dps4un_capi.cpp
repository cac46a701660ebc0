#include "dps4un/dps4un.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "core/container.hpp"
#include "core/error.hpp"
#include "eval/metrics.hpp"
#include "library/library.hpp"
#include "pipeline/pipeline.hpp"
#include "pipeline/render.hpp"
#include "prior/checkpoint.hpp"
#include "prior/schedule.hpp"
#include "prior/trainer.hpp"
#include "sampler/sampler.hpp"
#include "segmentation/slic.hpp"
#include "synth/scene.hpp"

struct dps4un_cube {
  dps4un::HsiCube cube;
};
struct dps4un_matrix {
  Eigen::MatrixXd m;
};
struct dps4un_segmentation {
  dps4un::SuperpixelMap map;
};
struct dps4un_library {
  dps4un::SpectralLibrary lib;
};
struct dps4un_model {
  dps4un::DenoiserModel model;
};
struct dps4un_result {
  dps4un::UnmixResult result;
};
struct dps4un_report {
  dps4un::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

dps4un_status to_status(dps4un::ErrorCode code) {
  switch (code) {
    case dps4un::ErrorCode::InvalidArgument: return DPS4UN_ERR_INVALID_ARGUMENT;
    case dps4un::ErrorCode::Io: return DPS4UN_ERR_IO;
    case dps4un::ErrorCode::Format: return DPS4UN_ERR_FORMAT;
    case dps4un::ErrorCode::Dimension: return DPS4UN_ERR_DIMENSION;
    case dps4un::ErrorCode::Numeric: return DPS4UN_ERR_NUMERIC;
    case dps4un::ErrorCode::Internal: return DPS4UN_ERR_INTERNAL;
  }
  return DPS4UN_ERR_INTERNAL;
}

template <typename F>
dps4un_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return DPS4UN_OK;
  } catch (const dps4un::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DPS4UN_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DPS4UN_ERR_INTERNAL;
  }
}

template <typename T>
void need(const T* p, const char* what) {
  if (p == nullptr) dps4un::fail(dps4un::ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

dps4un_matrix* wrap(Eigen::MatrixXd m) { return new dps4un_matrix{std::move(m)}; }

dps4un::SceneConfig scene_config(const dps4un_synth_params* p) {
  dps4un::SceneConfig c;
  c.height = p->height;
  c.width = p->width;
  c.bands = p->bands;
  c.endmembers = p->endmembers;
  c.snr_db = p->snr_db;
  c.variability = p->variability;
  c.abundance_block = p->abundance_block;
  c.variability_block = p->variability_block;
  c.dirichlet_alpha = p->dirichlet_alpha;
  c.seed = p->seed;
  return c;
}

}  // namespace

extern "C" {

const char* dps4un_version(void) { return DPS4UN_VERSION_STRING; }

const char* dps4un_status_string(dps4un_status status) {
  switch (status) {
    case DPS4UN_OK: return "ok";
    case DPS4UN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DPS4UN_ERR_IO: return "i/o error";
    case DPS4UN_ERR_FORMAT: return "format error";
    case DPS4UN_ERR_DIMENSION: return "dimension mismatch";
    case DPS4UN_ERR_NUMERIC: return "numerical failure";
    case DPS4UN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* dps4un_last_error(void) { return g_last_error.c_str(); }

dps4un_status dps4un_set_threads(int n) {
  return guarded([&] {
    if (n <= 0) {
      const char* env = std::getenv("DPS4UN_THREADS");
      if (env == nullptr || *env == '\0') return;
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (*end != '\0' || v < 1 || v > 4096) {
        dps4un::fail(dps4un::ErrorCode::InvalidArgument, "DPS4UN_THREADS must be a positive integer");
      }
      n = static_cast<int>(v);
    }
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
  });
}

void dps4un_string_free(char* s) { std::free(s); }

dps4un_status dps4un_cube_create(size_t height, size_t width, size_t bands, const float* data, dps4un_cube** out) {
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    std::vector<float> v(data, data + height * width * bands);
    *out = new dps4un_cube{dps4un::HsiCube(height, width, bands, std::move(v))};
  });
}

dps4un_status dps4un_cube_load(const char* path, dps4un_cube** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new dps4un_cube{dps4un::load_cube(path)};
  });
}

dps4un_status dps4un_cube_save(const dps4un_cube* cube, const char* path) {
  return guarded([&] {
    need(cube, "cube");
    need(path, "path");
    dps4un::save_cube(cube->cube, path);
  });
}

dps4un_status dps4un_cube_normalize(const dps4un_cube* cube, dps4un_cube** out) {
  return guarded([&] {
    need(cube, "cube");
    need(out, "out");
    *out = new dps4un_cube{dps4un::normalize(cube->cube)};
  });
}

dps4un_status dps4un_cube_shape(const dps4un_cube* cube, size_t* height, size_t* width, size_t* bands) {
  return guarded([&] {
    need(cube, "cube");
    if (height) *height = cube->cube.height();
    if (width) *width = cube->cube.width();
    if (bands) *bands = cube->cube.bands();
  });
}

const float* dps4un_cube_data(const dps4un_cube* cube) { return cube ? cube->cube.data().data() : nullptr; }

void dps4un_cube_free(dps4un_cube* cube) { delete cube; }

dps4un_status dps4un_matrix_create(size_t rows, size_t cols, const double* data, dps4un_matrix** out) {
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    *out = wrap(Eigen::Map<const RowMajor>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)));
  });
}

dps4un_status dps4un_matrix_load(const char* path, dps4un_matrix** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = wrap(dps4un::load_matrix(path));
  });
}

dps4un_status dps4un_matrix_save(const dps4un_matrix* m, const char* path, const char* kind) {
  return guarded([&] {
    need(m, "matrix");
    need(path, "path");
    dps4un::save_matrix(m->m, path, kind ? kind : "matrix");
  });
}

dps4un_status dps4un_matrix_shape(const dps4un_matrix* m, size_t* rows, size_t* cols) {
  return guarded([&] {
    need(m, "matrix");
    if (rows) *rows = static_cast<size_t>(m->m.rows());
    if (cols) *cols = static_cast<size_t>(m->m.cols());
  });
}

dps4un_status dps4un_matrix_copy(const dps4un_matrix* m, double* out, size_t count) {
  return guarded([&] {
    need(m, "matrix");
    need(out, "out");
    dps4un::require(count == static_cast<size_t>(m->m.size()), dps4un::ErrorCode::Dimension,
                    "matrix_copy: count must equal rows*cols");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<RowMajor>(out, m->m.rows(), m->m.cols()) = m->m;
  });
}

void dps4un_matrix_free(dps4un_matrix* m) { delete m; }

void dps4un_synth_default_params(dps4un_synth_params* p) {
  if (p == nullptr) return;
  const dps4un::SceneConfig c;
  *p = {c.height, c.width, c.bands, c.endmembers, c.snr_db, c.variability,
        c.abundance_block, c.variability_block, c.dirichlet_alpha, c.seed};
}

dps4un_status dps4un_synth(const dps4un_synth_params* p, dps4un_cube** cube, dps4un_matrix** endmembers,
                           dps4un_matrix** abundances) {
  return guarded([&] {
    need(p, "params");
    dps4un::SynthScene s = dps4un::make_scene(scene_config(p));
    if (cube) *cube = new dps4un_cube{s.cube};
    if (endmembers) *endmembers = wrap(s.endmembers);
    if (abundances) *abundances = wrap(s.abundances);
  });
}

dps4un_status dps4un_synth_save(const dps4un_synth_params* p, const char* dir) {
  return guarded([&] {
    need(p, "params");
    need(dir, "dir");
    dps4un::save_scene(dps4un::make_scene(scene_config(p)), dir);
  });
}

void dps4un_slic_default_params(dps4un_slic_params* p) {
  if (p == nullptr) return;
  const dps4un::SlicParams s;
  *p = {s.target_regions, s.compactness, s.iterations, s.squared_spectral ? 1 : 0, s.enforce_connectivity ? 1 : 0,
        s.seed};
}

dps4un_status dps4un_segment(const dps4un_cube* cube, const dps4un_slic_params* p, dps4un_segmentation** out) {
  return guarded([&] {
    need(cube, "cube");
    need(p, "params");
    need(out, "out");
    dps4un::SlicParams s;
    s.target_regions = p->target_regions;
    s.compactness = p->compactness;
    s.iterations = p->iterations;
    s.squared_spectral = p->squared_spectral != 0;
    s.enforce_connectivity = p->enforce_connectivity != 0;
    s.seed = p->seed;
    *out = new dps4un_segmentation{dps4un::slic_segment(cube->cube, s)};
  });
}

dps4un_status dps4un_segmentation_create(size_t height, size_t width, const int32_t* labels,
                                         dps4un_segmentation** out) {
  return guarded([&] {
    need(labels, "labels");
    need(out, "out");
    std::vector<int> l(labels, labels + height * width);
    *out = new dps4un_segmentation{dps4un::SuperpixelMap::from_labels(height, width, std::move(l))};
  });
}

dps4un_status dps4un_segmentation_merge_small(const dps4un_segmentation* seg, size_t min_pixels,
                                              dps4un_segmentation** out) {
  return guarded([&] {
    need(seg, "segmentation");
    need(out, "out");
    *out = new dps4un_segmentation{dps4un::merge_small_regions(seg->map, min_pixels)};
  });
}

dps4un_status dps4un_segmentation_load(const char* path, dps4un_segmentation** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new dps4un_segmentation{dps4un::load_labels(path)};
  });
}

dps4un_status dps4un_segmentation_save(const dps4un_segmentation* seg, const char* path) {
  return guarded([&] {
    need(seg, "segmentation");
    need(path, "path");
    dps4un::save_labels(seg->map, path);
  });
}

dps4un_status dps4un_segmentation_write_pgm(const dps4un_segmentation* seg, const char* path) {
  return guarded([&] {
    need(seg, "segmentation");
    need(path, "path");
    dps4un::write_labels_pgm16(seg->map, path);
  });
}

dps4un_status dps4un_segmentation_write_csv(const dps4un_segmentation* seg, const char* path) {
  return guarded([&] {
    need(seg, "segmentation");
    need(path, "path");
    dps4un::write_labels_csv(seg->map, path);
  });
}

dps4un_status dps4un_segmentation_info(const dps4un_segmentation* seg, size_t* height, size_t* width,
                                       int* region_count) {
  return guarded([&] {
    need(seg, "segmentation");
    if (height) *height = seg->map.height;
    if (width) *width = seg->map.width;
    if (region_count) *region_count = seg->map.region_count;
  });
}

dps4un_status dps4un_segmentation_labels(const dps4un_segmentation* seg, int32_t* out, size_t count) {
  return guarded([&] {
    need(seg, "segmentation");
    need(out, "out");
    dps4un::require(count == seg->map.labels.size(), dps4un::ErrorCode::Dimension,
                    "segmentation_labels: count must equal height*width");
    std::copy(seg->map.labels.begin(), seg->map.labels.end(), out);
  });
}

void dps4un_segmentation_free(dps4un_segmentation* seg) { delete seg; }

dps4un_status dps4un_build_library(const dps4un_cube* cube, const dps4un_segmentation* seg, int k, uint64_t seed,
                                   dps4un_library** out) {
  return guarded([&] {
    need(cube, "cube");
    need(seg, "segmentation");
    need(out, "out");
    *out = new dps4un_library{dps4un::build_library(cube->cube, seg->map, k, seed)};
  });
}

dps4un_status dps4un_library_assign_clusters(const dps4un_library* lib, int clusters, uint64_t seed,
                                             dps4un_library** out) {
  return guarded([&] {
    need(lib, "library");
    need(out, "out");
    *out = new dps4un_library{dps4un::assign_clusters(lib->lib, clusters, seed)};
  });
}

dps4un_status dps4un_library_load(const char* path, dps4un_library** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new dps4un_library{dps4un::load_library(path)};
  });
}

dps4un_status dps4un_library_save(const dps4un_library* lib, const char* path) {
  return guarded([&] {
    need(lib, "library");
    need(path, "path");
    dps4un::save_library(lib->lib, path);
  });
}

dps4un_status dps4un_library_write_csv(const dps4un_library* lib, const char* path) {
  return guarded([&] {
    need(lib, "library");
    need(path, "path");
    dps4un::write_library_csv(lib->lib, path);
  });
}

dps4un_status dps4un_library_info(const dps4un_library* lib, size_t* entries, size_t* bands, int* per_region,
                                  int* clusters) {
  return guarded([&] {
    need(lib, "library");
    if (entries) *entries = static_cast<size_t>(lib->lib.size());
    if (bands) *bands = static_cast<size_t>(lib->lib.bands());
    if (per_region) *per_region = lib->lib.per_region;
    if (clusters) *clusters = lib->lib.cluster_count;
  });
}

void dps4un_library_free(dps4un_library* lib) { delete lib; }

void dps4un_train_default_params(dps4un_train_params* p) {
  if (p == nullptr) return;
  const dps4un::TrainConfig t;
  const dps4un::DenoiserConfig a;
  *p = {t.steps, t.batch, t.lr, t.ema_decay, t.dropout, a.stages, a.hidden, a.time_dim, a.label_dim,
        1000, 1e-4, 0.02, t.seed};
}

dps4un_status dps4un_train(const dps4un_library* lib, const dps4un_train_params* p, const char* loss_csv,
                           dps4un_model** out) {
  return guarded([&] {
    need(lib, "library");
    need(p, "params");
    need(out, "out");
    dps4un::require(lib->lib.clustered(), dps4un::ErrorCode::InvalidArgument,
                    "train: library has no cluster ids; run assign_clusters first");
    dps4un::DenoiserConfig arch;
    arch.bands = static_cast<int>(lib->lib.bands());
    arch.clusters = lib->lib.cluster_count;
    arch.stages = p->stages;
    arch.hidden = p->hidden;
    arch.time_dim = p->time_dim;
    arch.label_dim = p->label_dim;
    dps4un::TrainConfig cfg;
    cfg.steps = p->steps;
    cfg.batch = p->batch;
    cfg.lr = p->lr;
    cfg.ema_decay = p->ema_decay;
    cfg.dropout = p->dropout;
    cfg.seed = p->seed;
    dps4un::TrainReport report;
    auto model = dps4un::train_prior(lib->lib, dps4un::make_schedule(p->diffusion_steps, p->beta_start, p->beta_end),
                                     arch, cfg, &report);
    if (loss_csv) dps4un::write_loss_csv(report, loss_csv);
    *out = new dps4un_model{std::move(model)};
  });
}

dps4un_status dps4un_model_load(const char* path, int expected_bands, dps4un_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::optional<int> bands;
    if (expected_bands > 0) bands = expected_bands;
    *out = new dps4un_model{dps4un::load_model(path, bands)};
  });
}

dps4un_status dps4un_model_save(const dps4un_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    dps4un::save_model(model->model, path);
  });
}

dps4un_status dps4un_model_info(const dps4un_model* model, int* bands, int* clusters, size_t* parameters) {
  return guarded([&] {
    need(model, "model");
    if (bands) *bands = model->model.config().bands;
    if (clusters) *clusters = model->model.config().clusters;
    if (parameters) *parameters = model->model.parameter_count();
  });
}

void dps4un_model_free(dps4un_model* model) { delete model; }

void dps4un_unmix_default_params(dps4un_unmix_params* p) {
  if (p == nullptr) return;
  const dps4un::SamplerConfig s;
  *p = {s.ddim_steps, s.eta, s.lambda, s.fidelity_scale, s.pgd_inner, s.fclsu_iterations, s.cold_start ? 1 : 0,
        s.record_trajectory ? 1 : 0, s.seed};
}

dps4un_status dps4un_unmix(const dps4un_cube* cube, const dps4un_segmentation* seg, const dps4un_model* model,
                           const dps4un_library* lib, const dps4un_unmix_params* p, dps4un_result** out) {
  return guarded([&] {
    need(cube, "cube");
    need(seg, "segmentation");
    need(model, "model");
    need(lib, "library");
    need(p, "params");
    need(out, "out");
    dps4un::require(lib->lib.clustered(), dps4un::ErrorCode::InvalidArgument, "unmix: library is not clustered");
    dps4un::SamplerConfig cfg;
    cfg.ddim_steps = p->ddim_steps;
    cfg.eta = p->eta;
    cfg.lambda = p->lambda;
    cfg.fidelity_scale = p->fidelity_scale;
    cfg.pgd_inner = p->pgd_inner;
    cfg.fclsu_iterations = p->fclsu_iterations;
    cfg.cold_start = p->cold_start != 0;
    cfg.record_trajectory = p->record_trajectory != 0;
    cfg.seed = p->seed;
    const auto ids = dps4un::slot_conditions(lib->lib, seg->map.region_count);
    *out = new dps4un_result{dps4un::run_dps4un(cube->cube, seg->map, model->model, ids, cfg)};
  });
}

dps4un_status dps4un_result_abundances(const dps4un_result* r, dps4un_matrix** out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    *out = wrap(r->result.abundances);
  });
}

dps4un_status dps4un_result_endmembers(const dps4un_result* r, dps4un_matrix** mean, dps4un_matrix** std) {
  return guarded([&] {
    need(r, "result");
    if (mean) *mean = wrap(r->result.ensemble_mean);
    if (std) *std = wrap(r->result.ensemble_std);
  });
}

dps4un_status dps4un_result_region_endmembers(const dps4un_result* r, int region, dps4un_matrix** out) {
  return guarded([&] {
    need(r, "result");
    need(out, "out");
    dps4un::require(region >= 0 && static_cast<size_t>(region) < r->result.region_endmembers.size(),
                    dps4un::ErrorCode::InvalidArgument, "result_region_endmembers: region out of range");
    *out = wrap(r->result.region_endmembers[static_cast<size_t>(region)]);
  });
}

dps4un_status dps4un_result_save(const dps4un_result* r, const char* dir) {
  return guarded([&] {
    need(r, "result");
    need(dir, "dir");
    dps4un::save_unmix_result(r->result, dir);
  });
}

void dps4un_result_free(dps4un_result* r) { delete r; }

dps4un_status dps4un_baseline(const dps4un_cube* cube, int k, uint64_t seed, dps4un_matrix** endmembers,
                              dps4un_matrix** abundances) {
  return guarded([&] {
    need(cube, "cube");
    dps4un::BaselineResult b = dps4un::unmix_vca_fclsu(cube->cube, k, seed);
    if (endmembers) *endmembers = wrap(std::move(b.endmembers));
    if (abundances) *abundances = wrap(std::move(b.abundances));
  });
}

dps4un_status dps4un_evaluate(const dps4un_matrix* est_endmembers, const dps4un_matrix* est_abundances,
                              const dps4un_matrix* ref_endmembers, const dps4un_matrix* ref_abundances,
                              dps4un_report** out) {
  return guarded([&] {
    need(est_endmembers, "est_endmembers");
    need(ref_endmembers, "ref_endmembers");
    need(out, "out");
    dps4un::require((est_abundances == nullptr) == (ref_abundances == nullptr), dps4un::ErrorCode::InvalidArgument,
                    "evaluate: pass both abundance matrices or neither");
    const Eigen::MatrixXd none;
    *out = new dps4un_report{dps4un::evaluate(est_endmembers->m, est_abundances ? est_abundances->m : none,
                                              ref_endmembers->m, ref_abundances ? ref_abundances->m : none)};
  });
}

dps4un_status dps4un_report_metrics(const dps4un_report* r, double* armse, double* asad) {
  return guarded([&] {
    need(r, "report");
    if (armse) *armse = r->report.per_endmember_rmse.empty() ? NAN : r->report.armse;
    if (asad) *asad = r->report.asad;
  });
}

dps4un_status dps4un_report_matching(const dps4un_report* r, int* matching, size_t count) {
  return guarded([&] {
    need(r, "report");
    need(matching, "matching");
    dps4un::require(count == r->report.matching.size(), dps4un::ErrorCode::Dimension,
                    "report_matching: count must equal K");
    std::copy(r->report.matching.begin(), r->report.matching.end(), matching);
  });
}

dps4un_status dps4un_report_json(const dps4un_report* r, char** out) {
  return guarded([&] {
    need(r, "report");
    need(out, "out");
    *out = dup_string(dps4un::report_to_json(r->report).dump(2));
  });
}

dps4un_status dps4un_report_table(const dps4un_report* r, char** out) {
  return guarded([&] {
    need(r, "report");
    need(out, "out");
    *out = dup_string(dps4un::format_report_table(r->report));
  });
}

void dps4un_report_free(dps4un_report* r) { delete r; }

dps4un_status dps4un_render_abundances(const dps4un_matrix* abundances, size_t height, size_t width, const char* dir,
                                       const char* prefix) {
  return guarded([&] {
    need(abundances, "abundances");
    need(dir, "dir");
    dps4un::render_abundance_maps(abundances->m, height, width, dir, prefix ? prefix : "abundance");
  });
}

dps4un_status dps4un_render_trajectory(const char* trajectory_csv, const char* dir) {
  return guarded([&] {
    need(trajectory_csv, "trajectory_csv");
    need(dir, "dir");
    dps4un::render_trajectory(dps4un::read_trajectory_csv(trajectory_csv), dir);
  });
}

dps4un_status dps4un_run_pipeline(const char* config_json, const char* base_dir, char** manifest) {
  return guarded([&] {
    need(config_json, "config_json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      dps4un::fail(dps4un::ErrorCode::Format, std::string("config is not valid JSON: ") + e.what());
    }
    const auto opts = dps4un::parse_pipeline_config(j, base_dir ? std::filesystem::path(base_dir) : std::filesystem::path());
    const auto outcome = dps4un::run_pipeline(opts);
    if (manifest) *manifest = dup_string(outcome.manifest.dump(2));
  });
}

}  // extern "C"
