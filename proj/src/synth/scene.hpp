#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "core/hsi.hpp"

namespace dps4un {

struct SceneConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  int bands = 64;
  int endmembers = 3;
  /// Infinity gives a noiseless cube.
  double snr_db = 30.0;
  double variability = 0.05;
  /// Side of the square blocks that carry independent Dirichlet draws.
  int abundance_block = 4;
  /// Side of the square blocks that share one perturbed endmember set.
  int variability_block = 8;
  double dirichlet_alpha = 1.0;
  std::uint64_t seed = 0;
};

struct SynthScene {
  HsiCube cube;
  Eigen::MatrixXd endmembers;                      // C x K base signatures
  std::vector<Eigen::MatrixXd> region_endmembers;  // per variability block
  std::vector<int> region_of_pixel;                // row-major
  Eigen::MatrixXd abundances;                      // K x N
  Eigen::MatrixXd clean;                           // C x N noiseless pixels
  double snr_db = std::numeric_limits<double>::infinity();
  double measured_snr_db = std::numeric_limits<double>::infinity();
};

SynthScene make_scene(const SceneConfig& cfg);

/// 10 log10(||clean||^2 / ||noisy - clean||^2); infinity when equal.
double measured_snr_db(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy);

/// cube.f32, endmembers.f32, abundances.f32 and region_endmembers.f32
/// (stacked (R*C) x K) in `dir`.
void save_scene(const SynthScene& scene, const std::filesystem::path& dir);

}  // namespace dps4un
