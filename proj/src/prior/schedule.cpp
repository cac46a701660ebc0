#include "prior/schedule.hpp"

#include <cmath>

#include "core/error.hpp"

namespace dps4un {

double NoiseSchedule::alpha_bar_at(int t) const {
  require(t >= 0 && t <= steps, ErrorCode::InvalidArgument, "timestep " + std::to_string(t) + " outside [0, T]");
  return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  require(steps >= 1, ErrorCode::InvalidArgument, "schedule needs at least one step");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorCode::InvalidArgument,
          "schedule requires 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.resize(static_cast<std::size_t>(steps));
  s.alpha_bar.resize(static_cast<std::size_t>(steps));
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    s.beta[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - s.beta[static_cast<std::size_t>(i)];
    s.alpha_bar[static_cast<std::size_t>(i)] = prod;
  }
  return s;
}

Eigen::VectorXd forward_noise(const Eigen::VectorXd& a0, int t, const NoiseSchedule& schedule,
                              const Eigen::VectorXd& eps) {
  require(t >= 1 && t <= schedule.steps, ErrorCode::InvalidArgument, "forward_noise: t outside [1, T]");
  require(a0.size() == eps.size(), ErrorCode::Dimension, "forward_noise: size mismatch");
  const double ab = schedule.alpha_bar_at(t);
  return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps;
}

std::vector<int> ddim_timesteps(const NoiseSchedule& schedule, int count) {
  require(count >= 1 && count <= schedule.steps, ErrorCode::InvalidArgument, "DDIM step count must be in [1, T]");
  std::vector<int> ts;
  for (int j = count - 1; j >= 0; --j) {
    ts.push_back(1 + static_cast<int>(static_cast<long long>(j) * schedule.steps / count));
  }
  return ts;
}

}  // namespace dps4un
