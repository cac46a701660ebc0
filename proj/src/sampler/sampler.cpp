#include "sampler/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "core/container.hpp"
#include "core/error.hpp"
#include "library/vca.hpp"
#include "sampler/simplex.hpp"

namespace dps4un {

namespace {

// Eval-mode forward, one column at a time, keeping caches for the VJP.
Eigen::MatrixXd forward_columns(const DenoiserModel& model, const Eigen::MatrixXd& a_t, int t,
                                std::span<const int> ids, std::vector<ForwardCache>& caches) {
  require(static_cast<Eigen::Index>(ids.size()) == a_t.cols(), ErrorCode::Dimension,
          "one condition id per endmember slot required");
  caches.resize(static_cast<std::size_t>(a_t.cols()));
  Eigen::MatrixXd eps(a_t.rows(), a_t.cols());
  const int ts[1] = {t};
  for (Eigen::Index k = 0; k < a_t.cols(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    Eigen::MatrixXd col = a_t.col(k);
    eps.col(k) = denoiser_forward(model, col, ts, ids.subspan(ks, 1), 0.0, nullptr, &caches[ks]);
  }
  return eps;
}

Eigen::MatrixXd vjp_columns(const DenoiserModel& model, const std::vector<ForwardCache>& caches,
                            const Eigen::MatrixXd& upstream) {
  Eigen::MatrixXd out(upstream.rows(), upstream.cols());
  for (Eigen::Index k = 0; k < upstream.cols(); ++k) {
    Eigen::MatrixXd g;
    Eigen::MatrixXd up = upstream.col(k);
    denoiser_backward(model, caches[static_cast<std::size_t>(k)], up, nullptr, &g);
    out.col(k) = g;
  }
  return out;
}

// Gradient of ||X - clip(raw) S||^2 with respect to A_t, where
// raw = (A_t - sqrt(1 - abar) eps(A_t)) / sqrt(abar).
Eigen::MatrixXd fidelity_from_cache(const DenoiserModel& model, const std::vector<ForwardCache>& caches,
                                    const Eigen::MatrixXd& raw, const Eigen::MatrixXd& residual,
                                    const Eigen::MatrixXd& s, double alpha_bar) {
  Eigen::MatrixXd g = -2.0 * residual * s.transpose();
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double r = raw.data()[i];
    if (r < 0.0 || r > 1.0) g.data()[i] = 0.0;
  }
  const double inv_sqrt_ab = 1.0 / std::sqrt(alpha_bar);
  const double noise_coef = std::sqrt(1.0 - alpha_bar) * inv_sqrt_ab;
  return inv_sqrt_ab * g - vjp_columns(model, caches, noise_coef * g);
}

Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  // Column-major fill keeps the draw order independent of Eigen internals.
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

std::uint64_t region_seed(std::uint64_t seed, int region) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(region + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Eigen::MatrixXd tweedie_from_noise(const Eigen::MatrixXd& a_t, const Eigen::MatrixXd& eps, double alpha_bar,
                                   bool clip) {
  Eigen::MatrixXd a0 = (a_t - std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha_bar);
  if (clip) a0 = a0.cwiseMax(0.0).cwiseMin(1.0);
  return a0;
}

Eigen::MatrixXd tweedie_from_score(const Eigen::MatrixXd& a_t, const Eigen::MatrixXd& score, double alpha_bar) {
  return (a_t + (1.0 - alpha_bar) * score) / std::sqrt(alpha_bar);
}

Eigen::MatrixXd tweedie_mean(const Eigen::MatrixXd& a_t, int t, const DenoiserModel& model,
                             std::span<const int> slot_ids) {
  std::vector<ForwardCache> caches;
  const Eigen::MatrixXd eps = forward_columns(model, a_t, t, slot_ids, caches);
  return tweedie_from_noise(a_t, eps, model.schedule().alpha_bar_at(t), true);
}

FidelityGradient fidelity_grad(const Eigen::MatrixXd& a_t, const Eigen::MatrixXd& x, const Eigen::MatrixXd& s,
                               const DenoiserModel& model, int t, std::span<const int> slot_ids) {
  require(a_t.cols() == s.rows() && x.cols() == s.cols() && x.rows() == a_t.rows(), ErrorCode::Dimension,
          "fidelity_grad: shape mismatch");
  const double ab = model.schedule().alpha_bar_at(t);
  std::vector<ForwardCache> caches;
  const Eigen::MatrixXd eps = forward_columns(model, a_t, t, slot_ids, caches);
  const Eigen::MatrixXd raw = tweedie_from_noise(a_t, eps, ab, false);
  FidelityGradient out;
  out.a0_hat = raw.cwiseMax(0.0).cwiseMin(1.0);
  const Eigen::MatrixXd residual = x - out.a0_hat * s;
  out.residual_norm = residual.norm();
  out.grad = fidelity_from_cache(model, caches, raw, residual, s, ab);
  return out;
}

double ddim_sigma(int t, int t_prev, double eta, const NoiseSchedule& schedule) {
  const double ab = schedule.alpha_bar_at(t);
  const double ab_prev = schedule.alpha_bar_at(t_prev);
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
}

Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& a_t, int t, int t_prev, const Eigen::MatrixXd& eps_hat, double eta,
                          const NoiseSchedule& schedule, const Eigen::MatrixXd& z) {
  require(t_prev < t, ErrorCode::InvalidArgument, "ddim_step: t_prev must be smaller than t");
  require(eta >= 0.0 && eta <= 1.0, ErrorCode::InvalidArgument, "ddim_step: eta must be in [0, 1]");
  const double ab = schedule.alpha_bar_at(t);
  const double ab_prev = schedule.alpha_bar_at(t_prev);
  require(ab_prev > ab, ErrorCode::Numeric, "ddim_step: alpha_bar must decrease with t");
  const double sigma = ddim_sigma(t, t_prev, eta, schedule);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  Eigen::MatrixXd out = std::sqrt(ab_prev) * tweedie_from_noise(a_t, eps_hat, ab, false) + dir * eps_hat;
  if (sigma > 0.0) out += sigma * z;
  return out;
}

UnmixResult run_dps4un(const HsiCube& cube, const SuperpixelMap& map, const DenoiserModel& model,
                       const std::vector<std::vector<int>>& slot_ids, const SamplerConfig& cfg) {
  const int regions = map.region_count;
  const auto bands = static_cast<Eigen::Index>(cube.bands());
  require(model.config().bands == static_cast<int>(bands), ErrorCode::Dimension,
          "run_dps4un: model bands do not match the cube");
  require(map.height == cube.height() && map.width == cube.width(), ErrorCode::Dimension,
          "run_dps4un: superpixel map does not match the cube");
  require(static_cast<int>(slot_ids.size()) == regions && regions > 0, ErrorCode::Dimension,
          "run_dps4un: one slot-id list per region required");
  const auto k = static_cast<Eigen::Index>(slot_ids.front().size());
  require(k >= 1, ErrorCode::InvalidArgument, "run_dps4un: need at least one endmember slot");
  for (const auto& ids : slot_ids) {
    require(static_cast<Eigen::Index>(ids.size()) == k, ErrorCode::Dimension, "run_dps4un: ragged slot ids");
    for (int id : ids) {
      require(id >= 0 && id < model.config().clusters, ErrorCode::InvalidArgument, "run_dps4un: slot id out of range");
    }
  }
  require(cfg.ddim_steps >= 1 && cfg.pgd_inner >= 1 && cfg.lambda >= 0.0 && cfg.fidelity_scale >= 0.0,
          ErrorCode::InvalidArgument, "run_dps4un: invalid sampler configuration");

  std::vector<int> order = cfg.region_order;
  if (order.empty()) {
    order.resize(static_cast<std::size_t>(regions));
    for (int l = 0; l < regions; ++l) order[static_cast<std::size_t>(l)] = l;
  }
  {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int l = 0; l < regions; ++l) {
      require(static_cast<int>(sorted.size()) == regions && sorted[static_cast<std::size_t>(l)] == l,
              ErrorCode::InvalidArgument, "run_dps4un: region_order is not a permutation");
    }
  }

  const NoiseSchedule& sched = model.schedule();
  const std::vector<int> ts = ddim_timesteps(sched, cfg.ddim_steps);

  struct RegionState {
    Eigen::MatrixXd x, a, s, a0;
    std::mt19937_64 rng;
  };
  std::vector<RegionState> state(static_cast<std::size_t>(regions));
  for (int l = 0; l < regions; ++l) {
    auto& st = state[static_cast<std::size_t>(l)];
    st.x = cube.gather(map.region_pixels[static_cast<std::size_t>(l)]);
    st.rng.seed(region_seed(cfg.seed, l));
    st.a = standard_normal(bands, k, st.rng);
  }

  UnmixResult result;
  std::vector<std::vector<TrajectorySnapshot>> traj(static_cast<std::size_t>(regions));

  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    const double ab = sched.alpha_bar_at(t);

#pragma omp parallel for schedule(dynamic)
    for (int oi = 0; oi < regions; ++oi) {
      const int l = order[static_cast<std::size_t>(oi)];
      auto& st = state[static_cast<std::size_t>(l)];
      const auto& ids = slot_ids[static_cast<std::size_t>(l)];

      std::vector<ForwardCache> caches;
      const Eigen::MatrixXd eps = forward_columns(model, st.a, t, ids, caches);
      const Eigen::MatrixXd raw = tweedie_from_noise(st.a, eps, ab, false);
      st.a0 = raw.cwiseMax(0.0).cwiseMin(1.0);
      const Eigen::MatrixXd z = standard_normal(bands, k, st.rng);
      Eigen::MatrixXd next = ddim_step(st.a, t, t_prev, eps, cfg.eta, sched, z);

      if (i == 0 || cfg.cold_start) st.s = fclsu_init(st.x, st.a0, cfg.fclsu_iterations);
      for (int it = 0; it < cfg.pgd_inner; ++it) st.s = pgd_abundance_step(st.s, st.a0, st.x, cfg.lambda);

      if (cfg.fidelity_scale > 0.0) {
        const Eigen::MatrixXd residual = st.x - st.a0 * st.s;
        const double rn = residual.norm();
        if (rn > 0.0) {
          next -= (cfg.fidelity_scale / rn) * fidelity_from_cache(model, caches, raw, residual, st.s, ab);
        }
      }
      st.a = std::move(next);

      if (cfg.record_trajectory) {
        for (Eigen::Index c = 0; c < k; ++c) {
          traj[static_cast<std::size_t>(l)].push_back({static_cast<int>(i), t, l, static_cast<int>(c), st.a0.col(c)});
        }
      }
    }

    for (int l = 0; l < regions; ++l) {
      const auto& st = state[static_cast<std::size_t>(l)];
      if (!st.a.allFinite() || !st.s.allFinite()) {
        std::ostringstream msg;
        msg << "run_dps4un: non-finite state at DDIM iteration " << i << " (t=" << t << "), region " << l;
        fail(ErrorCode::Numeric, msg.str());
      }
    }
  }

  result.abundances.resize(k, static_cast<Eigen::Index>(cube.pixels()));
  result.region_endmembers.reserve(static_cast<std::size_t>(regions));
  for (int l = 0; l < regions; ++l) {
    const auto& st = state[static_cast<std::size_t>(l)];
    const auto& px = map.region_pixels[static_cast<std::size_t>(l)];
    for (std::size_t j = 0; j < px.size(); ++j) {
      result.abundances.col(static_cast<Eigen::Index>(px[j])) = st.s.col(static_cast<Eigen::Index>(j));
    }
    result.region_endmembers.push_back(st.a0);
  }

  result.ensemble_mean = Eigen::MatrixXd::Zero(bands, k);
  for (const auto& e : result.region_endmembers) result.ensemble_mean += e;
  result.ensemble_mean /= static_cast<double>(regions);
  result.ensemble_std = Eigen::MatrixXd::Zero(bands, k);
  for (const auto& e : result.region_endmembers) result.ensemble_std += (e - result.ensemble_mean).cwiseAbs2();
  result.ensemble_std = (result.ensemble_std / static_cast<double>(regions)).cwiseSqrt();

  if (cfg.record_trajectory) {
    for (auto& tr : traj) {
      for (auto& snap : tr) result.trajectory.push_back(std::move(snap));
    }
    std::stable_sort(result.trajectory.begin(), result.trajectory.end(),
                     [](const TrajectorySnapshot& a, const TrajectorySnapshot& b) { return a.step < b.step; });
  }
  return result;
}

BaselineResult unmix_vca_fclsu(const HsiCube& cube, int k, std::uint64_t seed, int fclsu_iterations) {
  const Eigen::MatrixXd x = cube.to_matrix();
  BaselineResult r;
  r.endmembers = vca(x, k, seed).endmembers;
  r.abundances = fclsu_init(x, r.endmembers, fclsu_iterations);
  return r;
}

void write_trajectory_csv(const std::vector<TrajectorySnapshot>& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << "step,timestep,region,slot,pc1,pc2\n";
  if (trajectory.empty()) return;
  const Eigen::Index dims = trajectory.front().spectrum.size();
  Eigen::MatrixXd data(dims, static_cast<Eigen::Index>(trajectory.size()));
  for (std::size_t i = 0; i < trajectory.size(); ++i) data.col(static_cast<Eigen::Index>(i)) = trajectory[i].spectrum;
  const Eigen::VectorXd mean = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - mean;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered * centered.transpose());
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(dims, 2);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, dims); ++c) basis.col(c) = es.eigenvectors().col(dims - 1 - c);
  const Eigen::MatrixXd proj = basis.transpose() * centered;
  out.precision(9);
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& s = trajectory[i];
    out << s.step << ',' << s.timestep << ',' << s.region << ',' << s.slot << ',' << proj(0, static_cast<Eigen::Index>(i))
        << ',' << proj(1, static_cast<Eigen::Index>(i)) << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void write_ensemble_csv(const UnmixResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out.precision(9);
  out << "band";
  for (Eigen::Index k = 0; k < result.ensemble_mean.cols(); ++k) out << ",mean_" << k << ",std_" << k;
  out << '\n';
  for (Eigen::Index b = 0; b < result.ensemble_mean.rows(); ++b) {
    out << b;
    for (Eigen::Index k = 0; k < result.ensemble_mean.cols(); ++k) {
      out << ',' << result.ensemble_mean(b, k) << ',' << result.ensemble_std(b, k);
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void save_unmix_result(const UnmixResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_matrix(result.abundances, dir / "abundances.f32", "abundances");
  save_matrix(result.ensemble_mean, dir / "endmembers_mean.f32", "endmembers");
  save_matrix(result.ensemble_std, dir / "endmembers_std.f32", "endmembers");
  if (!result.region_endmembers.empty()) {
    const Eigen::Index bands = result.region_endmembers.front().rows();
    const Eigen::Index k = result.region_endmembers.front().cols();
    // Stacked (L*C) x K: rows l*C .. l*C + C - 1 hold region l.
    Eigen::MatrixXd stacked(bands * static_cast<Eigen::Index>(result.region_endmembers.size()), k);
    for (std::size_t l = 0; l < result.region_endmembers.size(); ++l) {
      stacked.middleRows(static_cast<Eigen::Index>(l) * bands, bands) = result.region_endmembers[l];
    }
    save_matrix(stacked, dir / "region_endmembers.f32", "region_endmembers");
  }
  write_ensemble_csv(result, dir / "ensemble.csv");
  if (!result.trajectory.empty()) write_trajectory_csv(result.trajectory, dir / "trajectory.csv");
}

}  // namespace dps4un
