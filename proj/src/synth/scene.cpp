#include "synth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "core/container.hpp"
#include "core/error.hpp"
#include "sampler/simplex.hpp"

namespace dps4un {

namespace {

Eigen::VectorXd smooth_spectrum(int bands, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(bands);
  double acc = 0.0;
  for (int b = 0; b < bands; ++b) {
    acc += normal(rng);
    v(b) = acc;
  }
  const double lo = v.minCoeff(), hi = v.maxCoeff();
  if (hi - lo <= 0.0) return Eigen::VectorXd::Constant(bands, 0.5);
  return (0.1 + 0.8 * (v.array() - lo) / (hi - lo)).matrix();
}

// Unit-variance noise with a short box smoothing along the bands.
Eigen::VectorXd smooth_noise(int bands, std::mt19937_64& rng) {
  constexpr int kHalf = 2;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd raw(bands + 2 * kHalf);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw(i) = normal(rng);
  Eigen::VectorXd out(bands);
  const double scale = 1.0 / std::sqrt(2.0 * kHalf + 1.0);
  for (int b = 0; b < bands; ++b) out(b) = raw.segment(b, 2 * kHalf + 1).sum() * scale;
  return out;
}

Eigen::VectorXd dirichlet(int k, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v(i) = gamma(rng);
  const double s = v.sum();
  if (s <= 0.0) return Eigen::VectorXd::Constant(k, 1.0 / k);
  return v / s;
}

}  // namespace

double measured_snr_db(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& noisy) {
  require(clean.rows() == noisy.rows() && clean.cols() == noisy.cols(), ErrorCode::Dimension,
          "measured_snr_db: shape mismatch");
  const double noise = (noisy - clean).squaredNorm();
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(clean.squaredNorm() / noise);
}

SynthScene make_scene(const SceneConfig& cfg) {
  require(cfg.height > 0 && cfg.width > 0 && cfg.bands > 0, ErrorCode::InvalidArgument, "make_scene: empty scene");
  require(cfg.endmembers >= 1, ErrorCode::InvalidArgument, "make_scene: need at least one endmember");
  require(cfg.snr_db > 0.0, ErrorCode::InvalidArgument, "make_scene: snr_db must be positive");
  require(cfg.variability >= 0.0 && std::isfinite(cfg.variability), ErrorCode::InvalidArgument,
          "make_scene: variability must be finite and non-negative");
  require(cfg.abundance_block >= 1 && cfg.variability_block >= 1 && cfg.dirichlet_alpha > 0.0,
          ErrorCode::InvalidArgument, "make_scene: invalid block size or Dirichlet parameter");

  const auto h = static_cast<Eigen::Index>(cfg.height);
  const auto w = static_cast<Eigen::Index>(cfg.width);
  const Eigen::Index n = h * w;
  const int k = cfg.endmembers;
  const int c = cfg.bands;

  std::mt19937_64 rng(cfg.seed);
  SynthScene scene;
  scene.snr_db = cfg.snr_db;

  scene.endmembers.resize(c, k);
  for (int j = 0; j < k; ++j) scene.endmembers.col(j) = smooth_spectrum(c, rng);

  // Coarse Dirichlet lattice, nearest-neighbour upsampled, then a 3x3 box filter.
  const Eigen::Index bh = (h + cfg.abundance_block - 1) / cfg.abundance_block;
  const Eigen::Index bw = (w + cfg.abundance_block - 1) / cfg.abundance_block;
  Eigen::MatrixXd coarse(k, bh * bw);
  for (Eigen::Index i = 0; i < coarse.cols(); ++i) coarse.col(i) = dirichlet(k, cfg.dirichlet_alpha, rng);
  Eigen::MatrixXd upsampled(k, n);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      upsampled.col(y * w + x) = coarse.col((y / cfg.abundance_block) * bw + x / cfg.abundance_block);
    }
  }
  scene.abundances.resize(k, n);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(k);
      int count = 0;
      for (Eigen::Index yy = std::max<Eigen::Index>(0, y - 1); yy <= std::min(h - 1, y + 1); ++yy) {
        for (Eigen::Index xx = std::max<Eigen::Index>(0, x - 1); xx <= std::min(w - 1, x + 1); ++xx) {
          acc += upsampled.col(yy * w + xx);
          ++count;
        }
      }
      scene.abundances.col(y * w + x) = project_simplex(acc / count);
    }
  }

  const Eigen::Index rh = (h + cfg.variability_block - 1) / cfg.variability_block;
  const Eigen::Index rw = (w + cfg.variability_block - 1) / cfg.variability_block;
  scene.region_endmembers.reserve(static_cast<std::size_t>(rh * rw));
  for (Eigen::Index r = 0; r < rh * rw; ++r) {
    Eigen::MatrixXd a = scene.endmembers;
    for (int j = 0; j < k; ++j) {
      const Eigen::VectorXd u = smooth_noise(c, rng);
      a.col(j).array() *= (1.0 + cfg.variability * u.array());
    }
    scene.region_endmembers.push_back(a.cwiseMax(0.0));
  }
  scene.region_of_pixel.resize(static_cast<std::size_t>(n));
  scene.clean.resize(c, n);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index p = y * w + x;
      const int r = static_cast<int>((y / cfg.variability_block) * rw + x / cfg.variability_block);
      scene.region_of_pixel[static_cast<std::size_t>(p)] = r;
      scene.clean.col(p) = scene.region_endmembers[static_cast<std::size_t>(r)] * scene.abundances.col(p);
    }
  }

  Eigen::MatrixXd noisy = scene.clean;
  if (std::isfinite(cfg.snr_db)) {
    const double signal_power = scene.clean.squaredNorm() / static_cast<double>(scene.clean.size());
    const double sigma = std::sqrt(signal_power / std::pow(10.0, cfg.snr_db / 10.0));
    std::normal_distribution<double> normal(0.0, sigma);
    for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += normal(rng);
  }
  scene.cube = cube_from_matrix(cfg.height, cfg.width, noisy);
  scene.measured_snr_db = measured_snr_db(scene.clean, scene.cube.to_matrix());
  return scene;
}

void save_scene(const SynthScene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_cube(scene.cube, dir / "cube.f32");
  save_matrix(scene.endmembers, dir / "endmembers.f32", "endmembers");
  save_matrix(scene.abundances, dir / "abundances.f32", "abundances");
  const Eigen::Index c = scene.endmembers.rows();
  Eigen::MatrixXd stacked(c * static_cast<Eigen::Index>(scene.region_endmembers.size()), scene.endmembers.cols());
  for (std::size_t r = 0; r < scene.region_endmembers.size(); ++r) {
    stacked.middleRows(static_cast<Eigen::Index>(r) * c, c) = scene.region_endmembers[r];
  }
  save_matrix(stacked, dir / "region_endmembers.f32", "region_endmembers");
}

}  // namespace dps4un
