#include "prior/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace dps4un {

double denoising_loss(const DenoiserModel& model, const Eigen::MatrixXd& a0, std::span<const int> t,
                      std::span<const int> c, const Eigen::MatrixXd& eps, double dropout, std::mt19937_64* rng,
                      std::vector<Eigen::MatrixXd>* grads) {
  const auto& sched = model.schedule();
  Eigen::MatrixXd a_t(a0.rows(), a0.cols());
  for (Eigen::Index j = 0; j < a0.cols(); ++j) {
    const double ab = sched.alpha_bar_at(t[static_cast<std::size_t>(j)]);
    a_t.col(j) = std::sqrt(ab) * a0.col(j) + std::sqrt(1.0 - ab) * eps.col(j);
  }
  ForwardCache cache;
  const Eigen::MatrixXd pred = denoiser_forward(model, a_t, t, c, dropout, rng, grads ? &cache : nullptr);
  const Eigen::MatrixXd diff = pred - eps;
  const double norm = static_cast<double>(diff.size());
  if (grads) denoiser_backward(model, cache, (2.0 / norm) * diff, grads, nullptr);
  return diff.squaredNorm() / norm;
}

DenoiserModel train_prior(const Eigen::MatrixXd& spectra, std::span<const int> labels, int clusters,
                          const NoiseSchedule& schedule, const DenoiserConfig& arch, const TrainConfig& cfg,
                          TrainReport* report) {
  require(spectra.cols() > 0, ErrorCode::InvalidArgument, "train_prior: empty library");
  require(static_cast<Eigen::Index>(labels.size()) == spectra.cols(), ErrorCode::Dimension,
          "train_prior: one label per spectrum required");
  require(cfg.lr >= 0.0, ErrorCode::InvalidArgument, "train_prior: learning rate must be non-negative");
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, ErrorCode::InvalidArgument, "train_prior: dropout must be in [0, 1)");
  require(cfg.batch >= 1 && cfg.steps >= 0, ErrorCode::InvalidArgument, "train_prior: invalid batch/steps");
  require(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0, ErrorCode::InvalidArgument, "train_prior: EMA decay in [0, 1)");
  for (int l : labels) {
    require(l >= 0 && l < clusters, ErrorCode::InvalidArgument, "train_prior: label outside [0, clusters)");
  }

  DenoiserConfig config = arch;
  config.bands = static_cast<int>(spectra.rows());
  config.clusters = clusters;
  DenoiserModel model(config, schedule, cfg.seed);
  model.round_to_f32();
  auto& params = model.params();
  std::vector<Eigen::MatrixXd> m1 = zero_gradients(model), m2 = zero_gradients(model);
  std::vector<Eigen::MatrixXd> ema = params;
  const bool use_ema = cfg.ema_decay > 0.0;

  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  std::uniform_int_distribution<Eigen::Index> pick(0, spectra.cols() - 1);
  std::uniform_int_distribution<int> step_dist(1, schedule.steps);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int bands = config.bands;
  Eigen::MatrixXd a0(bands, cfg.batch), eps(bands, cfg.batch);
  std::vector<int> t(static_cast<std::size_t>(cfg.batch)), c(static_cast<std::size_t>(cfg.batch));
  std::vector<double> all_losses;
  all_losses.reserve(static_cast<std::size_t>(cfg.steps));
  double window = 0.0;
  int window_count = 0;

  for (int step = 1; step <= cfg.steps; ++step) {
    for (int j = 0; j < cfg.batch; ++j) {
      const Eigen::Index idx = pick(rng);
      a0.col(j) = spectra.col(idx);
      c[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(idx)];
      t[static_cast<std::size_t>(j)] = step_dist(rng);
      for (int b = 0; b < bands; ++b) eps(b, j) = normal(rng);
    }
    std::vector<Eigen::MatrixXd> grads = zero_gradients(model);
    const double loss = denoising_loss(model, a0, t, c, eps, cfg.dropout, &rng, &grads);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "train_prior: non-finite loss at step " << step;
      if (!all_losses.empty()) msg << " (previous loss " << all_losses.back() << ")";
      fail(ErrorCode::Numeric, msg.str());
    }
    all_losses.push_back(loss);

    const double bc1 = 1.0 - std::pow(cfg.beta1, step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grads[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grads[i].cwiseAbs2();
      if (cfg.lr > 0.0) {
        params[i].array() -=
            cfg.lr * (m1[i].array() / bc1) / ((m2[i].array() / bc2).sqrt() + cfg.adam_eps);
      }
      if (use_ema) ema[i] = cfg.ema_decay * ema[i] + (1.0 - cfg.ema_decay) * params[i];
    }

    window += loss;
    ++window_count;
    if (report && (step % std::max(1, cfg.log_every) == 0 || step == cfg.steps)) {
      report->steps.push_back(step);
      report->losses.push_back(window / window_count);
      window = 0.0;
      window_count = 0;
    }
  }

  if (use_ema && cfg.steps > 0) params = std::move(ema);
  model.round_to_f32();

  if (report && !all_losses.empty()) {
    const std::size_t n = all_losses.size();
    const std::size_t tenth = std::max<std::size_t>(1, n / 10);
    report->first_decile_loss = std::accumulate(all_losses.begin(), all_losses.begin() + static_cast<long>(tenth), 0.0) / tenth;
    report->last_decile_loss = std::accumulate(all_losses.end() - static_cast<long>(tenth), all_losses.end(), 0.0) / tenth;
  }
  return model;
}

DenoiserModel train_prior(const SpectralLibrary& lib, const NoiseSchedule& schedule, const DenoiserConfig& arch,
                          const TrainConfig& cfg, TrainReport* report) {
  require(lib.clustered(), ErrorCode::InvalidArgument, "train_prior: library cluster ids are not assigned");
  return train_prior(lib.entries, lib.cluster_id, lib.cluster_count, schedule, arch, cfg, report);
}

void write_loss_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out.precision(9);
  out << "step,loss\n";
  for (std::size_t i = 0; i < report.steps.size(); ++i) out << report.steps[i] << ',' << report.losses[i] << '\n';
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

}  // namespace dps4un
