// dps4un command-line front end. Every subcommand goes through the C API.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dps4un/dps4un.h"

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(dps4un_status s, const char* what) {
  if (s != DPS4UN_OK) {
    throw CliError(std::string(what) + ": " + dps4un_status_string(s) + ": " + dps4un_last_error());
  }
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Cube = Handle<dps4un_cube, dps4un_cube_free>;
using Matrix = Handle<dps4un_matrix, dps4un_matrix_free>;
using Segmentation = Handle<dps4un_segmentation, dps4un_segmentation_free>;
using Library = Handle<dps4un_library, dps4un_library_free>;
using Model = Handle<dps4un_model, dps4un_model_free>;
using Result = Handle<dps4un_result, dps4un_result_free>;
using Report = Handle<dps4un_report, dps4un_report_free>;

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { dps4un_string_free(s); }
};

double parse_snr(const std::string& text) {
  if (text == "inf" || text == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw CliError("--snr must be a number or 'inf'");
  return v;
}

// "a.b.c=value": value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw CliError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &config;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->contains(path[i])) (*node)[path[i]] = nlohmann::json::object();
    node = &(*node)[path[i]];
  }
  (*node)[path.back()] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dps4un: semiblind hyperspectral unmixing with a diffusion prior"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dps4un_version()));
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: DPS4UN_THREADS or all cores)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
  dps4un_synth_params sp;
  dps4un_synth_default_params(&sp);
  std::string synth_out, synth_snr = "30";
  synth->add_option("--out,-o", synth_out, "Output directory")->required();
  synth->add_option("--height", sp.height)->capture_default_str();
  synth->add_option("--width", sp.width)->capture_default_str();
  synth->add_option("--bands", sp.bands)->capture_default_str();
  synth->add_option("--endmembers,-k", sp.endmembers)->capture_default_str();
  synth->add_option("--snr", synth_snr, "SNR in dB, or 'inf'")->capture_default_str();
  synth->add_option("--variability", sp.variability)->capture_default_str();
  synth->add_option("--abundance-block", sp.abundance_block)->capture_default_str();
  synth->add_option("--variability-block", sp.variability_block)->capture_default_str();
  synth->add_option("--dirichlet-alpha", sp.dirichlet_alpha)->capture_default_str();
  synth->add_option("--seed", sp.seed)->capture_default_str();

  // segment
  auto* segment = app.add_subcommand("segment", "SLIC superpixel segmentation");
  dps4un_slic_params slic;
  dps4un_slic_default_params(&slic);
  std::string seg_cube, seg_out, seg_pgm, seg_csv;
  std::size_t seg_min_pixels = 0;
  bool seg_squared = false, seg_no_connect = false;
  segment->add_option("--cube,-i", seg_cube)->required()->check(CLI::ExistingFile);
  segment->add_option("--out,-o", seg_out, "Label container")->required();
  segment->add_option("--regions,-L", slic.target_regions)->capture_default_str();
  segment->add_option("--compactness,-m", slic.compactness)->capture_default_str();
  segment->add_option("--iterations", slic.iterations)->capture_default_str();
  segment->add_flag("--squared-spectral", seg_squared);
  segment->add_flag("--no-connectivity", seg_no_connect);
  segment->add_option("--min-pixels", seg_min_pixels, "Merge regions smaller than this");
  segment->add_option("--pgm", seg_pgm, "Also write a 16-bit PGM label image");
  segment->add_option("--csv", seg_csv, "Also write labels as CSV");
  segment->add_option("--seed", slic.seed)->capture_default_str();

  // build-lib
  auto* build = app.add_subcommand("build-lib", "Per-region VCA library plus K-means condition ids");
  std::string lib_cube, lib_labels, lib_out, lib_csv;
  int lib_k = 3, lib_clusters = 0;
  std::uint64_t lib_seed = 0;
  build->add_option("--cube,-i", lib_cube)->required()->check(CLI::ExistingFile);
  build->add_option("--labels", lib_labels)->required()->check(CLI::ExistingFile);
  build->add_option("--out,-o", lib_out)->required();
  build->add_option("--endmembers,-k", lib_k)->capture_default_str();
  build->add_option("--clusters", lib_clusters, "K-means clusters (default: K)");
  build->add_option("--csv", lib_csv, "Also write the library as CSV");
  build->add_option("--seed", lib_seed)->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train the conditional diffusion prior");
  dps4un_train_params tp;
  dps4un_train_default_params(&tp);
  std::string tr_lib, tr_out, tr_loss;
  train->add_option("--library", tr_lib)->required()->check(CLI::ExistingFile);
  train->add_option("--out,-o", tr_out)->required();
  train->add_option("--loss-csv", tr_loss);
  train->add_option("--steps", tp.steps)->capture_default_str();
  train->add_option("--batch", tp.batch)->capture_default_str();
  train->add_option("--lr", tp.lr)->capture_default_str();
  train->add_option("--ema", tp.ema_decay, "EMA decay, 0 disables")->capture_default_str();
  train->add_option("--dropout", tp.dropout)->capture_default_str();
  train->add_option("--stages", tp.stages)->capture_default_str();
  train->add_option("--hidden", tp.hidden)->capture_default_str();
  train->add_option("--time-dim", tp.time_dim)->capture_default_str();
  train->add_option("--label-dim", tp.label_dim)->capture_default_str();
  train->add_option("--diffusion-steps,-T", tp.diffusion_steps)->capture_default_str();
  train->add_option("--beta-start", tp.beta_start)->capture_default_str();
  train->add_option("--beta-end", tp.beta_end)->capture_default_str();
  train->add_option("--seed", tp.seed)->capture_default_str();

  // unmix
  auto* unmix = app.add_subcommand("unmix", "Region-wise diffusion posterior sampling");
  dps4un_unmix_params up;
  dps4un_unmix_default_params(&up);
  std::string um_cube, um_labels, um_lib, um_model, um_out;
  bool um_cold = false, um_traj = false;
  unmix->add_option("--cube,-i", um_cube)->required()->check(CLI::ExistingFile);
  unmix->add_option("--labels", um_labels)->required()->check(CLI::ExistingFile);
  unmix->add_option("--library", um_lib)->required()->check(CLI::ExistingFile);
  unmix->add_option("--model", um_model)->required()->check(CLI::ExistingFile);
  unmix->add_option("--out,-o", um_out, "Output directory")->required();
  unmix->add_option("--ddim-steps", up.ddim_steps)->capture_default_str();
  unmix->add_option("--eta", up.eta)->capture_default_str();
  unmix->add_option("--lambda", up.lambda)->capture_default_str();
  unmix->add_option("--zeta", up.fidelity_scale, "Fidelity scale")->capture_default_str();
  unmix->add_option("--pgd-inner", up.pgd_inner)->capture_default_str();
  unmix->add_option("--fclsu-iterations", up.fclsu_iterations)->capture_default_str();
  unmix->add_flag("--cold-start", um_cold);
  unmix->add_flag("--trajectory", um_traj, "Record per-step endmember snapshots");
  unmix->add_option("--seed", up.seed)->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Score estimates against reference endmembers and abundances");
  std::string ev_e, ev_s, ev_re, ev_rs, ev_json;
  std::uint64_t ev_seed = 0;
  eval->add_option("--endmembers", ev_e)->required()->check(CLI::ExistingFile);
  eval->add_option("--abundances", ev_s)->check(CLI::ExistingFile);
  eval->add_option("--ref-endmembers", ev_re)->required()->check(CLI::ExistingFile);
  eval->add_option("--ref-abundances", ev_rs)->check(CLI::ExistingFile);
  eval->add_option("--json", ev_json, "Write the report as JSON");
  eval->add_option("--seed", ev_seed, "Accepted for uniformity; evaluation is deterministic");

  // render
  auto* render = app.add_subcommand("render", "Abundance map images and trajectory plots");
  std::string rd_s, rd_like, rd_out, rd_prefix = "abundance", rd_traj;
  std::size_t rd_h = 0, rd_w = 0;
  std::uint64_t rd_seed = 0;
  render->add_option("--abundances", rd_s)->check(CLI::ExistingFile);
  render->add_option("--like", rd_like, "Cube or label container providing the image size")
      ->check(CLI::ExistingFile);
  render->add_option("--height", rd_h);
  render->add_option("--width", rd_w);
  render->add_option("--prefix", rd_prefix)->capture_default_str();
  render->add_option("--trajectory", rd_traj, "Trajectory CSV from unmix --trajectory")->check(CLI::ExistingFile);
  render->add_option("--out,-o", rd_out)->required();
  render->add_option("--seed", rd_seed, "Accepted for uniformity; rendering is deterministic");

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run synth/input -> segment -> build-lib -> train -> unmix -> eval");
  std::string pl_config, pl_output;
  std::vector<std::string> pl_set;
  std::uint64_t pl_seed = 0;
  bool pl_print = false;
  pipeline->add_option("config", pl_config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--output,-o", pl_output, "Override output_dir");
  auto* pl_seed_opt = pipeline->add_option("--seed", pl_seed, "Override the top-level seed");
  pipeline->add_option("--set", pl_set, "Override a config value, e.g. unmix.lambda=1");
  pipeline->add_flag("--print-manifest", pl_print);

  CLI11_PARSE(app, argc, argv);

  try {
    check(dps4un_set_threads(threads), "threads");

    if (synth->parsed()) {
      sp.snr_db = parse_snr(synth_snr);
      check(dps4un_synth_save(&sp, synth_out.c_str()), "synth");
      std::cout << "wrote scene to " << synth_out << '\n';
    } else if (segment->parsed()) {
      slic.squared_spectral = seg_squared ? 1 : 0;
      slic.enforce_connectivity = seg_no_connect ? 0 : 1;
      Cube cube;
      Segmentation seg, merged;
      check(dps4un_cube_load(seg_cube.c_str(), cube.out()), "load cube");
      check(dps4un_segment(cube.get(), &slic, seg.out()), "segment");
      const dps4un_segmentation* result = seg.get();
      if (seg_min_pixels > 0) {
        check(dps4un_segmentation_merge_small(seg.get(), seg_min_pixels, merged.out()), "merge");
        result = merged.get();
      }
      check(dps4un_segmentation_save(result, seg_out.c_str()), "save labels");
      if (!seg_pgm.empty()) check(dps4un_segmentation_write_pgm(result, seg_pgm.c_str()), "write pgm");
      if (!seg_csv.empty()) check(dps4un_segmentation_write_csv(result, seg_csv.c_str()), "write csv");
      int regions = 0;
      check(dps4un_segmentation_info(result, nullptr, nullptr, &regions), "segment");
      std::cout << regions << " regions\n";
    } else if (build->parsed()) {
      Cube cube;
      Segmentation seg;
      Library raw, lib;
      check(dps4un_cube_load(lib_cube.c_str(), cube.out()), "load cube");
      check(dps4un_segmentation_load(lib_labels.c_str(), seg.out()), "load labels");
      check(dps4un_build_library(cube.get(), seg.get(), lib_k, lib_seed, raw.out()), "build-lib");
      check(dps4un_library_assign_clusters(raw.get(), lib_clusters > 0 ? lib_clusters : lib_k, lib_seed + 1, lib.out()),
            "cluster");
      check(dps4un_library_save(lib.get(), lib_out.c_str()), "save library");
      if (!lib_csv.empty()) check(dps4un_library_write_csv(lib.get(), lib_csv.c_str()), "write csv");
      std::size_t entries = 0;
      int clusters = 0;
      check(dps4un_library_info(lib.get(), &entries, nullptr, nullptr, &clusters), "build-lib");
      std::cout << entries << " library entries, " << clusters << " clusters\n";
    } else if (train->parsed()) {
      Library lib;
      Model model;
      check(dps4un_library_load(tr_lib.c_str(), lib.out()), "load library");
      check(dps4un_train(lib.get(), &tp, tr_loss.empty() ? nullptr : tr_loss.c_str(), model.out()), "train");
      check(dps4un_model_save(model.get(), tr_out.c_str()), "save model");
      std::cout << "wrote model to " << tr_out << '\n';
    } else if (unmix->parsed()) {
      up.cold_start = um_cold ? 1 : 0;
      up.record_trajectory = um_traj ? 1 : 0;
      Cube cube;
      Segmentation seg;
      Library lib;
      Model model;
      Result result;
      check(dps4un_cube_load(um_cube.c_str(), cube.out()), "load cube");
      std::size_t bands = 0;
      check(dps4un_cube_shape(cube.get(), nullptr, nullptr, &bands), "load cube");
      check(dps4un_segmentation_load(um_labels.c_str(), seg.out()), "load labels");
      check(dps4un_library_load(um_lib.c_str(), lib.out()), "load library");
      check(dps4un_model_load(um_model.c_str(), static_cast<int>(bands), model.out()), "load model");
      check(dps4un_unmix(cube.get(), seg.get(), model.get(), lib.get(), &up, result.out()), "unmix");
      check(dps4un_result_save(result.get(), um_out.c_str()), "save result");
      std::cout << "wrote results to " << um_out << '\n';
    } else if (eval->parsed()) {
      if (ev_s.empty() != ev_rs.empty()) throw CliError("eval: give both --abundances and --ref-abundances or neither");
      Matrix e, s, re, rs;
      Report report;
      check(dps4un_matrix_load(ev_e.c_str(), e.out()), "load endmembers");
      check(dps4un_matrix_load(ev_re.c_str(), re.out()), "load reference endmembers");
      if (!ev_s.empty()) {
        check(dps4un_matrix_load(ev_s.c_str(), s.out()), "load abundances");
        check(dps4un_matrix_load(ev_rs.c_str(), rs.out()), "load reference abundances");
      }
      check(dps4un_evaluate(e.get(), s.get(), re.get(), rs.get(), report.out()), "eval");
      OwnedString table, json;
      check(dps4un_report_table(report.get(), &table.s), "eval");
      std::cout << table.s;
      if (!ev_json.empty()) {
        check(dps4un_report_json(report.get(), &json.s), "eval");
        std::ofstream out(ev_json, std::ios::trunc);
        out << json.s << '\n';
        if (!out) throw CliError("cannot write " + ev_json);
      }
    } else if (render->parsed()) {
      if (rd_s.empty() && rd_traj.empty()) throw CliError("render: nothing to do; give --abundances and/or --trajectory");
      if (!rd_s.empty()) {
        if (!rd_like.empty()) {
          Cube cube;
          Segmentation seg;
          if (dps4un_cube_load(rd_like.c_str(), cube.out()) == DPS4UN_OK) {
            check(dps4un_cube_shape(cube.get(), &rd_h, &rd_w, nullptr), "render");
          } else {
            check(dps4un_segmentation_load(rd_like.c_str(), seg.out()), "render: --like is neither a cube nor labels");
            check(dps4un_segmentation_info(seg.get(), &rd_h, &rd_w, nullptr), "render");
          }
        }
        if (rd_h == 0 || rd_w == 0) throw CliError("render: give --like or both --height and --width");
        Matrix s;
        check(dps4un_matrix_load(rd_s.c_str(), s.out()), "load abundances");
        check(dps4un_render_abundances(s.get(), rd_h, rd_w, rd_out.c_str(), rd_prefix.c_str()), "render");
      }
      if (!rd_traj.empty()) check(dps4un_render_trajectory(rd_traj.c_str(), rd_out.c_str()), "render trajectory");
      std::cout << "wrote images to " << rd_out << '\n';
    } else if (pipeline->parsed()) {
      std::ifstream in(pl_config);
      nlohmann::json config = nlohmann::json::parse(in, nullptr, false);
      if (config.is_discarded()) throw CliError("config '" + pl_config + "' is not valid JSON");
      if (*pl_seed_opt) config["seed"] = pl_seed;
      if (!pl_output.empty()) config["output_dir"] = std::filesystem::absolute(pl_output).string();
      for (const auto& s : pl_set) apply_override(config, s);
      const std::string base = std::filesystem::absolute(pl_config).parent_path().string();
      OwnedString manifest;
      check(dps4un_run_pipeline(config.dump().c_str(), base.c_str(), &manifest.s), "pipeline");
      const nlohmann::json m = nlohmann::json::parse(manifest.s);
      if (pl_print) {
        std::cout << manifest.s << '\n';
      } else {
        std::cout << "manifest: " << (std::filesystem::path(m["config"]["output_dir"].get<std::string>()) / "manifest.json").string()
                  << '\n';
        if (m["metrics"].contains("dps4un")) std::cout << "dps4un: " << m["metrics"]["dps4un"].dump() << '\n';
        if (m["metrics"].contains("baseline_vca_fclsu")) {
          std::cout << "baseline: " << m["metrics"]["baseline_vca_fclsu"].dump() << '\n';
        }
      }
    }
  } catch (const CliError& e) {
    std::cerr << "dps4un: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
