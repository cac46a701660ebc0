#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "library/library.hpp"
#include "prior/denoiser.hpp"

namespace dps4un {

struct TrainConfig {
  int steps = 20000;  // gradient steps
  int batch = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;  // 0 disables the moving average
  double dropout = 0.1;
  std::uint64_t seed = 0;
  int log_every = 50;
};

struct TrainReport {
  std::vector<int> steps;
  std::vector<double> losses;  // mean minibatch loss over each logging window
  double first_decile_loss = 0.0;
  double last_decile_loss = 0.0;
};

/// Mean over the batch and bands of (eps_hat - eps)^2 for a0 diffused to the
/// given steps. Parameter gradients are accumulated into `grads` when given.
double denoising_loss(const DenoiserModel& model, const Eigen::MatrixXd& a0, std::span<const int> t,
                      std::span<const int> c, const Eigen::MatrixXd& eps, double dropout, std::mt19937_64* rng,
                      std::vector<Eigen::MatrixXd>* grads);

/// Trains on (spectrum, cluster id) pairs with Adam. Returns the EMA weights
/// when enabled, rounded to float32 so checkpoints reproduce them exactly.
DenoiserModel train_prior(const SpectralLibrary& lib, const NoiseSchedule& schedule, const DenoiserConfig& arch,
                          const TrainConfig& cfg, TrainReport* report = nullptr);

/// Same, on raw pairs: columns of `spectra` with ids in `labels`.
DenoiserModel train_prior(const Eigen::MatrixXd& spectra, std::span<const int> labels, int clusters,
                          const NoiseSchedule& schedule, const DenoiserConfig& arch, const TrainConfig& cfg,
                          TrainReport* report = nullptr);

void write_loss_csv(const TrainReport& report, const std::filesystem::path& path);

}  // namespace dps4un
