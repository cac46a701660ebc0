#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dps4un {

/// Discrete DDPM noise schedule over steps t = 1..T. Index 0 of the arrays
/// is step 1; alpha_bar(0) is defined as 1 (clean data).
struct NoiseSchedule {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  double alpha_bar_at(int t) const;
};

/// Linear beta ramp from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

/// sqrt(alpha_bar_t) * a0 + sqrt(1 - alpha_bar_t) * eps
Eigen::VectorXd forward_noise(const Eigen::VectorXd& a0, int t, const NoiseSchedule& schedule,
                              const Eigen::VectorXd& eps);

/// `count` evenly spaced steps 1 + j * T / count, largest first.
std::vector<int> ddim_timesteps(const NoiseSchedule& schedule, int count);

}  // namespace dps4un
