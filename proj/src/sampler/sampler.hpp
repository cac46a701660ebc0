#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "core/hsi.hpp"
#include "prior/denoiser.hpp"
#include "segmentation/slic.hpp"

namespace dps4un {

struct SamplerConfig {
  int ddim_steps = 20;
  double eta = 0.0;
  double lambda = 0.1;          // abundance gradient step
  double fidelity_scale = 1.0;  // zeta
  int pgd_inner = 1;
  int fclsu_iterations = 200;
  /// Re-run the constrained least-squares initialisation at every step
  /// instead of warm-starting from the previous abundances.
  bool cold_start = false;
  bool record_trajectory = false;
  std::uint64_t seed = 0;
  /// Optional processing order of the regions; results do not depend on it.
  std::vector<int> region_order;
};

struct TrajectorySnapshot {
  int step = 0;      // 0-based DDIM iteration
  int timestep = 0;  // diffusion step t
  int region = 0;
  int slot = 0;
  Eigen::VectorXd spectrum;
};

struct UnmixResult {
  std::vector<Eigen::MatrixXd> region_endmembers;  // L matrices, C x K
  Eigen::MatrixXd abundances;                      // K x N
  Eigen::MatrixXd ensemble_mean;                   // C x K
  Eigen::MatrixXd ensemble_std;                    // C x K
  std::vector<TrajectorySnapshot> trajectory;
};

/// (A_t - sqrt(1 - abar) eps) / sqrt(abar), optionally clipped to [0, 1].
Eigen::MatrixXd tweedie_from_noise(const Eigen::MatrixXd& a_t, const Eigen::MatrixXd& eps, double alpha_bar,
                                   bool clip);
/// (A_t + (1 - abar) s) / sqrt(abar) for a score s, unclipped.
Eigen::MatrixXd tweedie_from_score(const Eigen::MatrixXd& a_t, const Eigen::MatrixXd& score, double alpha_bar);

/// Posterior-mean endmember estimate for one region state (C x K), column k
/// conditioned on slot_ids[k]; clipped to [0, 1].
Eigen::MatrixXd tweedie_mean(const Eigen::MatrixXd& a_t, int t, const DenoiserModel& model,
                             std::span<const int> slot_ids);

struct FidelityGradient {
  Eigen::MatrixXd grad;       // d ||X - A0(A_t) S||_F^2 / d A_t
  Eigen::MatrixXd a0_hat;     // clipped Tweedie estimate used in the residual
  double residual_norm = 0.0; // ||X - A0 S||_F
};

/// Data-fidelity gradient through the Tweedie estimate and the denoiser.
/// Clipping passes gradient only where the unclipped estimate is in [0, 1].
FidelityGradient fidelity_grad(const Eigen::MatrixXd& a_t, const Eigen::MatrixXd& x, const Eigen::MatrixXd& s,
                               const DenoiserModel& model, int t, std::span<const int> slot_ids);

/// One DDIM update from step t to t_prev (< t; 0 means clean data).
Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& a_t, int t, int t_prev, const Eigen::MatrixXd& eps_hat, double eta,
                          const NoiseSchedule& schedule, const Eigen::MatrixXd& z);

double ddim_sigma(int t, int t_prev, double eta, const NoiseSchedule& schedule);

/// Region-wise diffusion posterior sampling of endmembers and abundances.
/// slot_ids[l][k] is the condition id of endmember slot k in region l.
UnmixResult run_dps4un(const HsiCube& cube, const SuperpixelMap& map, const DenoiserModel& model,
                       const std::vector<std::vector<int>>& slot_ids, const SamplerConfig& cfg);

struct BaselineResult {
  Eigen::MatrixXd endmembers;  // C x K
  Eigen::MatrixXd abundances;  // K x N
};

/// Global VCA endmembers followed by the constrained least-squares solve.
BaselineResult unmix_vca_fclsu(const HsiCube& cube, int k, std::uint64_t seed, int fclsu_iterations = 200);

/// step,timestep,region,slot,pc1,pc2 with a 2-D PCA fitted over all snapshots.
void write_trajectory_csv(const std::vector<TrajectorySnapshot>& trajectory, const std::filesystem::path& path);
void write_ensemble_csv(const UnmixResult& result, const std::filesystem::path& path);
void save_unmix_result(const UnmixResult& result, const std::filesystem::path& dir);

}  // namespace dps4un
