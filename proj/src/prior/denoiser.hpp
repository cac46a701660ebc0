#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prior/schedule.hpp"

namespace dps4un {

struct DenoiserConfig {
  int bands = 0;
  int clusters = 1;
  int stages = 3;
  int hidden = 256;
  int time_dim = 128;
  int label_dim = 128;
};

/// Conditional MLP noise predictor. With f = A_t on entry, every stage does
///   f <- [A_t ; Drop(SiLU(W (f * (1 + alpha) + gamma) + b))]
/// where (alpha, gamma) are chunks of an MLP over the sinusoidal timestep
/// embedding and the label embedding, and a final affine head maps f to C
/// outputs. The output is the predicted forward-process noise; the score is
/// -output / sqrt(1 - alpha_bar_t).
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(const DenoiserConfig& config, NoiseSchedule schedule, std::uint64_t seed, bool zero_head = false);

  const DenoiserConfig& config() const noexcept { return config_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

  std::vector<Eigen::MatrixXd>& params() noexcept { return params_; }
  const std::vector<Eigen::MatrixXd>& params() const noexcept { return params_; }
  const std::vector<std::string>& param_names() const noexcept { return names_; }
  std::size_t parameter_count() const;

  /// Rounds every parameter to the nearest float32 value.
  void round_to_f32();

  // Parameter slots.
  static constexpr std::size_t kTimeW1 = 0, kTimeB1 = 1, kTimeW2 = 2, kTimeB2 = 3, kLabelTable = 4, kCondW = 5,
                               kCondB = 6, kModW = 7, kModB = 8, kFirstStage = 9;
  std::size_t stage_weight(int s) const { return kFirstStage + 2 * static_cast<std::size_t>(s); }
  std::size_t head_weight() const { return kFirstStage + 2 * static_cast<std::size_t>(config_.stages); }
  int stage_input_dim(int s) const { return s == 0 ? config_.bands : config_.bands + config_.hidden; }
  int feature_dim() const { return stage_input_dim(config_.stages); }
  int modulation_offset(int s) const;

 private:
  DenoiserConfig config_;
  NoiseSchedule schedule_;
  std::vector<Eigen::MatrixXd> params_;
  std::vector<std::string> names_;
};

/// Intermediates of one forward pass, kept for backpropagation.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<int> labels;
  Eigen::MatrixXd phi, z_time, temb, u, zc, hc, mod;
  std::vector<Eigen::MatrixXd> f_in, v, z, mask;
  Eigen::MatrixXd f_out;
  double dropout = 0.0;
};

Eigen::MatrixXd sinusoidal_embedding(std::span<const int> t, int dim);

/// Batched forward pass. Dropout with probability `dropout` is applied only
/// when `rng` is non-null (training mode).
Eigen::MatrixXd denoiser_forward(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                                 std::span<const int> c, double dropout, std::mt19937_64* rng, ForwardCache* cache);

/// Backpropagates `d_out` through a cached forward pass. Parameter gradients
/// are accumulated into `grads` (same layout as params()) and the input
/// gradient written to `d_input`; either may be null.
void denoiser_backward(const DenoiserModel& model, const ForwardCache& cache, const Eigen::MatrixXd& d_out,
                       std::vector<Eigen::MatrixXd>* grads, Eigen::MatrixXd* d_input);

/// Noise prediction. In eval mode (`train_mode` false) every column is
/// evaluated on its own, so results do not depend on batch composition.
Eigen::MatrixXd denoise(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                        std::span<const int> c, bool train_mode = false, double dropout = 0.0,
                        std::mt19937_64* rng = nullptr);

/// Learned score s = -eps_hat / sqrt(1 - alpha_bar_t), eval mode.
Eigen::MatrixXd score(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                      std::span<const int> c);


/// Eval-mode vector-Jacobian product (d eps_hat / d a_t)^T * upstream,
/// column by column. The noise prediction is written to `eps` when non-null.
Eigen::MatrixXd denoise_vjp(const DenoiserModel& model, const Eigen::MatrixXd& a_t, std::span<const int> t,
                            std::span<const int> c, const Eigen::MatrixXd& upstream, Eigen::MatrixXd* eps = nullptr);

std::vector<Eigen::MatrixXd> zero_gradients(const DenoiserModel& model);

}  // namespace dps4un
