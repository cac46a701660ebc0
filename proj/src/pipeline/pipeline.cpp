#include "pipeline/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "core/container.hpp"
#include "core/error.hpp"
#include "library/library.hpp"
#include "pipeline/render.hpp"
#include "prior/checkpoint.hpp"
#include "prior/schedule.hpp"

namespace dps4un {

namespace {

// Reads keys from one JSON object and rejects any it was not asked about.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) fail(ErrorCode::InvalidArgument, "config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::InvalidArgument, "config: '" + name_ + "." + key + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        fail(ErrorCode::InvalidArgument, "config: unknown key '" + name_ + "." + item.key() + "'");
      }
    }
  }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

double parse_snr(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity")) {
    return std::numeric_limits<double>::infinity();
  }
  fail(ErrorCode::InvalidArgument, "config: 'synth.snr_db' must be a number or \"inf\"");
}

nlohmann::json snr_to_json(double snr) {
  if (std::isinf(snr)) return "inf";
  return snr;
}

template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage '") + name + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Internal, std::string("stage '") + name + "': " + e.what());
  }
}

nlohmann::json report_block(const EvalReport& r) { return report_to_json(r); }

}  // namespace

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

PipelineOptions parse_pipeline_config(const nlohmann::json& config, const std::filesystem::path& base_dir) {
  PipelineOptions o;
  Section top(config, "config");
  std::string out_dir;
  top.get("output_dir", out_dir);
  if (out_dir.empty()) fail(ErrorCode::InvalidArgument, "config: 'output_dir' is required");
  o.output_dir = resolve(base_dir, out_dir);
  top.get("seed", o.seed);
  top.get("endmembers", o.endmembers);
  top.get("baseline", o.baseline);
  top.get("render", o.render);

  std::uint64_t lib_seed = o.seed + 1, cluster_seed = o.seed + 2;
  o.train.seed = o.seed + 3;
  o.sampler.seed = o.seed + 4;
  o.slic.seed = o.seed;

  const bool has_synth = top.has("synth");
  const bool has_input = top.has("input");
  if (has_synth == has_input) fail(ErrorCode::InvalidArgument, "config: exactly one of 'synth' or 'input' is required");
  if (has_synth) {
    SceneConfig sc;
    sc.endmembers = o.endmembers;
    sc.seed = o.seed;
    Section s(top.at("synth"), "synth");
    s.get("height", sc.height);
    s.get("width", sc.width);
    s.get("bands", sc.bands);
    if (s.has("snr_db")) sc.snr_db = parse_snr(s.at("snr_db"));
    s.get("variability", sc.variability);
    s.get("abundance_block", sc.abundance_block);
    s.get("variability_block", sc.variability_block);
    s.get("dirichlet_alpha", sc.dirichlet_alpha);
    s.get("seed", sc.seed);
    s.finish();
    o.synth = sc;
  } else {
    Section s(top.at("input"), "input");
    std::string cube, ems, abund;
    s.get("cube", cube);
    s.get("endmembers", ems);
    s.get("abundances", abund);
    s.get("normalize", o.normalize_input);
    s.finish();
    if (cube.empty()) fail(ErrorCode::InvalidArgument, "config: 'input.cube' is required");
    o.input_cube = resolve(base_dir, cube);
    o.reference_endmembers = resolve(base_dir, ems);
    o.reference_abundances = resolve(base_dir, abund);
    for (const auto& p : {o.input_cube, o.reference_endmembers, o.reference_abundances}) {
      if (!p.empty() && !std::filesystem::is_regular_file(p)) {
        fail(ErrorCode::Io, "config: input path '" + p.string() + "' does not exist");
      }
    }
  }

  if (top.has("segment")) {
    Section s(top.at("segment"), "segment");
    s.get("regions", o.slic.target_regions);
    s.get("compactness", o.slic.compactness);
    s.get("iterations", o.slic.iterations);
    s.get("squared_spectral", o.slic.squared_spectral);
    s.get("enforce_connectivity", o.slic.enforce_connectivity);
    s.get("min_region_pixels", o.min_region_pixels);
    s.get("seed", o.slic.seed);
    s.finish();
  }
  if (top.has("library")) {
    Section s(top.at("library"), "library");
    s.get("clusters", o.clusters);
    s.get("seed", lib_seed);
    s.get("cluster_seed", cluster_seed);
    s.finish();
  }
  if (top.has("train")) {
    Section s(top.at("train"), "train");
    s.get("steps", o.train.steps);
    s.get("batch", o.train.batch);
    s.get("lr", o.train.lr);
    s.get("ema_decay", o.train.ema_decay);
    s.get("dropout", o.train.dropout);
    s.get("log_every", o.train.log_every);
    s.get("seed", o.train.seed);
    s.get("stages", o.arch.stages);
    s.get("hidden", o.arch.hidden);
    s.get("time_dim", o.arch.time_dim);
    s.get("label_dim", o.arch.label_dim);
    s.get("diffusion_steps", o.diffusion_steps);
    s.get("beta_start", o.beta_start);
    s.get("beta_end", o.beta_end);
    s.finish();
  }
  if (top.has("unmix")) {
    Section s(top.at("unmix"), "unmix");
    s.get("ddim_steps", o.sampler.ddim_steps);
    s.get("eta", o.sampler.eta);
    s.get("lambda", o.sampler.lambda);
    s.get("fidelity_scale", o.sampler.fidelity_scale);
    s.get("pgd_inner", o.sampler.pgd_inner);
    s.get("fclsu_iterations", o.sampler.fclsu_iterations);
    s.get("cold_start", o.sampler.cold_start);
    s.get("trajectory", o.sampler.record_trajectory);
    s.get("seed", o.sampler.seed);
    s.finish();
  }
  top.finish();

  if (o.endmembers < 1) fail(ErrorCode::InvalidArgument, "config: 'endmembers' must be at least 1");
  if (o.synth && o.synth->endmembers != o.endmembers) o.synth->endmembers = o.endmembers;
  if (o.clusters < 0) fail(ErrorCode::InvalidArgument, "config: 'library.clusters' must be non-negative");
  if (o.slic.target_regions < 1) fail(ErrorCode::InvalidArgument, "config: 'segment.regions' must be at least 1");
  if (o.train.steps < 0 || o.train.batch < 1) fail(ErrorCode::InvalidArgument, "config: invalid training size");
  if (o.sampler.ddim_steps < 1 || o.sampler.ddim_steps > o.diffusion_steps) {
    fail(ErrorCode::InvalidArgument, "config: 'unmix.ddim_steps' must be in [1, diffusion_steps]");
  }
  if (!(o.sampler.lambda > 0.0)) fail(ErrorCode::InvalidArgument, "config: 'unmix.lambda' must be positive");
  if (o.sampler.fidelity_scale < 0.0 || o.sampler.pgd_inner < 1 || o.sampler.eta < 0.0 || o.sampler.eta > 1.0) {
    fail(ErrorCode::InvalidArgument, "config: invalid sampler setting");
  }
  o.library_seed = lib_seed;
  o.cluster_seed = cluster_seed;
  return o;
}

PipelineOptions load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::Format, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_pipeline_config(j, path.parent_path());
}

nlohmann::json pipeline_options_to_json(const PipelineOptions& o) {
  nlohmann::json j;
  j["output_dir"] = o.output_dir.string();
  j["seed"] = o.seed;
  j["endmembers"] = o.endmembers;
  j["baseline"] = o.baseline;
  j["render"] = o.render;
  if (o.synth) {
    const auto& s = *o.synth;
    j["synth"] = {{"height", s.height},
                  {"width", s.width},
                  {"bands", s.bands},
                  {"snr_db", snr_to_json(s.snr_db)},
                  {"variability", s.variability},
                  {"abundance_block", s.abundance_block},
                  {"variability_block", s.variability_block},
                  {"dirichlet_alpha", s.dirichlet_alpha},
                  {"seed", s.seed}};
  } else {
    j["input"] = {{"cube", o.input_cube.string()},
                  {"endmembers", o.reference_endmembers.string()},
                  {"abundances", o.reference_abundances.string()},
                  {"normalize", o.normalize_input}};
  }
  j["segment"] = {{"regions", o.slic.target_regions},
                  {"compactness", o.slic.compactness},
                  {"iterations", o.slic.iterations},
                  {"squared_spectral", o.slic.squared_spectral},
                  {"enforce_connectivity", o.slic.enforce_connectivity},
                  {"min_region_pixels", o.min_region_pixels},
                  {"seed", o.slic.seed}};
  j["library"] = {{"clusters", o.clusters}, {"seed", o.library_seed}, {"cluster_seed", o.cluster_seed}};
  j["train"] = {{"steps", o.train.steps},
                {"batch", o.train.batch},
                {"lr", o.train.lr},
                {"ema_decay", o.train.ema_decay},
                {"dropout", o.train.dropout},
                {"log_every", o.train.log_every},
                {"seed", o.train.seed},
                {"stages", o.arch.stages},
                {"hidden", o.arch.hidden},
                {"time_dim", o.arch.time_dim},
                {"label_dim", o.arch.label_dim},
                {"diffusion_steps", o.diffusion_steps},
                {"beta_start", o.beta_start},
                {"beta_end", o.beta_end}};
  j["unmix"] = {{"ddim_steps", o.sampler.ddim_steps},
                {"eta", o.sampler.eta},
                {"lambda", o.sampler.lambda},
                {"fidelity_scale", o.sampler.fidelity_scale},
                {"pgd_inner", o.sampler.pgd_inner},
                {"fclsu_iterations", o.sampler.fclsu_iterations},
                {"cold_start", o.sampler.cold_start},
                {"trajectory", o.sampler.record_trajectory},
                {"seed", o.sampler.seed}};
  return j;
}

PipelineOutcome run_pipeline(const PipelineOptions& o) {
  namespace fs = std::filesystem;
  const fs::path out = o.output_dir;
  stage("setup", [&] {
    fs::create_directories(out);
    return 0;
  });
  nlohmann::json artifacts = nlohmann::json::object();
  auto record = [&](const std::string& key, const fs::path& p) { artifacts[key] = fs::relative(p, out).string(); };

  const int k = o.endmembers;
  const int kc = o.clusters > 0 ? o.clusters : k;

  Eigen::MatrixXd ref_e, ref_s;
  std::vector<std::string> names;
  const HsiCube cube = stage("input", [&] {
    if (o.synth) {
      const SynthScene scene = make_scene(*o.synth);
      save_scene(scene, out / "scene");
      record("scene_cube", out / "scene" / "cube.f32");
      record("scene_endmembers", out / "scene" / "endmembers.f32");
      record("scene_abundances", out / "scene" / "abundances.f32");
      ref_e = scene.endmembers;
      ref_s = scene.abundances;
      return scene.cube;
    }
    HsiCube c = load_cube(o.input_cube);
    if (o.normalize_input) c = normalize(c);
    names = c.endmember_names;
    if (!o.reference_endmembers.empty()) ref_e = load_matrix(o.reference_endmembers);
    if (!o.reference_abundances.empty()) ref_s = load_matrix(o.reference_abundances);
    if (ref_e.size() > 0) {
      require(ref_e.rows() == static_cast<Eigen::Index>(c.bands()) && ref_e.cols() == k, ErrorCode::Dimension,
              "reference endmembers must be bands x K");
    }
    if (ref_s.size() > 0) {
      require(ref_s.rows() == k && ref_s.cols() == static_cast<Eigen::Index>(c.pixels()), ErrorCode::Dimension,
              "reference abundances must be K x pixels");
    }
    if (names.size() != static_cast<std::size_t>(k)) names.clear();
    return c;
  });

  const SuperpixelMap map = stage("segment", [&] {
    SuperpixelMap m = slic_segment(cube, o.slic);
    const std::size_t min_px = o.min_region_pixels > 0 ? o.min_region_pixels : static_cast<std::size_t>(k);
    m = merge_small_regions(m, min_px);
    save_labels(m, out / "labels.f32");
    write_labels_pgm16(m, out / "labels.pgm");
    record("labels", out / "labels.f32");
    record("labels_pgm", out / "labels.pgm");
    return m;
  });

  const SpectralLibrary lib = stage("build-lib", [&] {
    SpectralLibrary l = assign_clusters(build_library(cube, map, k, o.library_seed), kc, o.cluster_seed);
    save_library(l, out / "library.f32");
    write_library_csv(l, out / "library.csv");
    record("library", out / "library.f32");
    record("library_csv", out / "library.csv");
    return l;
  });

  const DenoiserModel model = stage("train", [&] {
    DenoiserConfig arch = o.arch;
    arch.bands = static_cast<int>(cube.bands());
    arch.clusters = kc;
    TrainReport rep;
    DenoiserModel m =
        train_prior(lib, make_schedule(o.diffusion_steps, o.beta_start, o.beta_end), arch, o.train, &rep);
    save_model(m, out / "model.f32");
    write_loss_csv(rep, out / "loss.csv");
    record("model", out / "model.f32");
    record("loss_csv", out / "loss.csv");
    return m;
  });

  PipelineOutcome outcome;
  outcome.result = stage("unmix", [&] {
    UnmixResult r = run_dps4un(cube, map, model, slot_conditions(lib, map.region_count), o.sampler);
    save_unmix_result(r, out / "unmix");
    record("abundances", out / "unmix" / "abundances.f32");
    record("endmembers_mean", out / "unmix" / "endmembers_mean.f32");
    record("endmembers_std", out / "unmix" / "endmembers_std.f32");
    record("region_endmembers", out / "unmix" / "region_endmembers.f32");
    record("ensemble_csv", out / "unmix" / "ensemble.csv");
    if (!r.trajectory.empty()) record("trajectory_csv", out / "unmix" / "trajectory.csv");
    return r;
  });

  nlohmann::json metrics = nlohmann::json::object();
  stage("eval", [&] {
    if (ref_e.size() > 0) {
      outcome.report = evaluate(outcome.result.ensemble_mean, ref_s.size() > 0 ? outcome.result.abundances : Eigen::MatrixXd(),
                                ref_e, ref_s, names);
      metrics["dps4un"] = report_block(*outcome.report);
      if (o.baseline) {
        const BaselineResult b = unmix_vca_fclsu(cube, k, o.seed + 5, o.sampler.fclsu_iterations);
        outcome.baseline_report =
            evaluate(b.endmembers, ref_s.size() > 0 ? b.abundances : Eigen::MatrixXd(), ref_e, ref_s, names);
        metrics["baseline_vca_fclsu"] = report_block(*outcome.baseline_report);
        save_matrix(b.endmembers, out / "baseline_endmembers.f32", "endmembers");
        save_matrix(b.abundances, out / "baseline_abundances.f32", "abundances");
        record("baseline_endmembers", out / "baseline_endmembers.f32");
        record("baseline_abundances", out / "baseline_abundances.f32");
      }
      std::ofstream rep(out / "report.txt", std::ios::trunc);
      rep << format_report_table(*outcome.report);
      if (outcome.baseline_report) rep << "\nbaseline (VCA + FCLSU)\n" << format_report_table(*outcome.baseline_report);
      if (!rep) fail(ErrorCode::Io, "cannot write report.txt");
      record("report", out / "report.txt");
    }
    return 0;
  });

  stage("render", [&] {
    if (!o.render) return 0;
    for (const auto& p : render_abundance_maps(outcome.result.abundances, cube.height(), cube.width(), out / "maps")) {
      record("map_" + p.stem().string(), p);
    }
    if (ref_s.size() > 0) {
      render_abundance_maps(ref_s, cube.height(), cube.width(), out / "maps", "reference");
    }
    if (!outcome.result.trajectory.empty()) {
      for (const auto& p : render_trajectory(read_trajectory_csv(out / "unmix" / "trajectory.csv"), out / "maps")) {
        record(p.stem().string(), p);
      }
    }
    return 0;
  });

  const nlohmann::json resolved = pipeline_options_to_json(o);
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(resolved.dump());
  outcome.manifest = {{"version", DPS4UN_VERSION_STRING},
                      {"config_hash", "fnv1a64:" + hash.str()},
                      {"config", resolved},
                      {"seeds",
                       {{"master", o.seed},
                        {"synth", o.synth ? nlohmann::json(o.synth->seed) : nlohmann::json(nullptr)},
                        {"library", o.library_seed},
                        {"clusters", o.cluster_seed},
                        {"train", o.train.seed},
                        {"sampler", o.sampler.seed},
                        {"baseline", o.seed + 5}}},
                      {"regions", map.region_count},
                      {"metrics", metrics},
                      {"artifacts", artifacts}};
  stage("manifest", [&] {
    std::ofstream m(out / "manifest.json", std::ios::trunc);
    m << outcome.manifest.dump(2) << '\n';
    if (!m) fail(ErrorCode::Io, "cannot write manifest.json");
    return 0;
  });
  return outcome;
}

}  // namespace dps4un
