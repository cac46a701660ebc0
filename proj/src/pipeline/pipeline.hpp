#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "eval/metrics.hpp"
#include "prior/denoiser.hpp"
#include "prior/trainer.hpp"
#include "sampler/sampler.hpp"
#include "segmentation/slic.hpp"
#include "synth/scene.hpp"

namespace dps4un {

struct PipelineOptions {
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  int endmembers = 3;  // K
  int clusters = 0;    // K_c; 0 means K

  // Exactly one of `synth` or `input_cube` is used.
  std::optional<SceneConfig> synth;
  std::filesystem::path input_cube;
  std::filesystem::path reference_endmembers;
  std::filesystem::path reference_abundances;
  bool normalize_input = false;

  SlicParams slic;
  std::size_t min_region_pixels = 0;  // 0 means K
  std::uint64_t library_seed = 1;
  std::uint64_t cluster_seed = 2;

  int diffusion_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  DenoiserConfig arch;  // bands and clusters are filled in at run time
  TrainConfig train;
  SamplerConfig sampler;

  bool baseline = true;
  bool render = true;
};

/// Parses and validates a JSON run configuration. Unknown keys are rejected;
/// relative paths are resolved against `base_dir`. Stage seeds default to
/// offsets of the top-level seed.
PipelineOptions parse_pipeline_config(const nlohmann::json& config, const std::filesystem::path& base_dir = {});
PipelineOptions load_pipeline_config(const std::filesystem::path& path);

/// Fully resolved configuration, the input of the manifest hash.
nlohmann::json pipeline_options_to_json(const PipelineOptions& opts);

/// 64-bit FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

struct PipelineOutcome {
  nlohmann::json manifest;
  UnmixResult result;
  std::optional<EvalReport> report;
  std::optional<EvalReport> baseline_report;
};

/// synth/load -> segment -> build-lib -> cluster -> train -> unmix -> eval,
/// writing every artifact and manifest.json into opts.output_dir. Stage
/// failures are rethrown with the stage name prefixed.
PipelineOutcome run_pipeline(const PipelineOptions& opts);

}  // namespace dps4un
