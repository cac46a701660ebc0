#include "library/vca.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <random>

#include "core/error.hpp"

namespace dps4un {

namespace {

// Leading `d` eigenvectors of a symmetric matrix, largest eigenvalue first.
Eigen::MatrixXd leading_eigenvectors(const Eigen::MatrixXd& sym, int d) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const Eigen::Index n = sym.rows();
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < d; ++i) out.col(i) = es.eigenvectors().col(n - 1 - i);
  return out;
}

}  // namespace

double vca_estimate_snr(const Eigen::MatrixXd& pixels, const Eigen::VectorXd& mean, const Eigen::MatrixXd& projected) {
  const double n = static_cast<double>(pixels.cols());
  const double bands = static_cast<double>(pixels.rows());
  const double p = static_cast<double>(projected.rows());
  const double power_y = pixels.squaredNorm() / n;
  const double power_x = projected.squaredNorm() / n + mean.squaredNorm();
  const double noise = power_y - power_x;
  const double signal = power_x - p / bands * power_y;
  if (noise <= 1e-12 * std::max(power_y, 1e-300)) return std::numeric_limits<double>::infinity();
  if (signal <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

VcaResult vca(const Eigen::MatrixXd& pixels, int k, std::uint64_t seed) {
  require(k >= 1, ErrorCode::InvalidArgument, "vca: k must be >= 1");
  const Eigen::Index n = pixels.cols();
  const Eigen::Index bands = pixels.rows();
  require(n >= k, ErrorCode::InvalidArgument, "vca: fewer pixels than requested endmembers");
  require(pixels.allFinite(), ErrorCode::Numeric, "vca: non-finite pixels");

  VcaResult result;
  const Eigen::VectorXd mean = pixels.rowwise().mean();

  auto most_extreme = [&] {
    Eigen::Index idx = 0;
    (pixels.colwise() - mean).colwise().squaredNorm().maxCoeff(&idx);
    return idx;
  };

  if (k == 1) {
    const Eigen::Index idx = most_extreme();
    result.indices = {static_cast<std::size_t>(idx)};
    result.endmembers = pixels.col(idx);
    return result;
  }

  const int p = std::min<int>(k, static_cast<int>(bands));
  const Eigen::MatrixXd centered = pixels.colwise() - mean;
  const Eigen::MatrixXd ud_centered =
      leading_eigenvectors(centered * centered.transpose() / static_cast<double>(n), p);
  const Eigen::MatrixXd xp_centered = ud_centered.transpose() * centered;
  result.snr_db = vca_estimate_snr(pixels, mean, xp_centered);
  const double snr_threshold = 15.0 + 10.0 * std::log10(static_cast<double>(k));

  Eigen::MatrixXd y;  // p x n projected data
  bool projective = result.snr_db >= snr_threshold && p == k;
  if (projective) {
    const Eigen::MatrixXd ud = leading_eigenvectors(pixels * pixels.transpose() / static_cast<double>(n), p);
    const Eigen::MatrixXd x = ud.transpose() * pixels;
    const Eigen::VectorXd u = x.rowwise().mean();
    const Eigen::RowVectorXd scale = u.transpose() * x;
    if (scale.cwiseAbs().minCoeff() > 1e-12) {
      y = x.array().rowwise() / scale.array();
    } else {
      projective = false;
    }
  }
  if (!projective) {
    const int d = p - 1;
    const Eigen::MatrixXd x = xp_centered.topRows(d);
    const double c = std::sqrt(x.colwise().squaredNorm().maxCoeff());
    y.resize(d + 1, n);
    y.topRows(d) = x;
    y.row(d).setConstant(c);
  }
  result.projective = projective;

  const Eigen::Index dim = y.rows();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(dim, k);
  basis(dim - 1, 0) = 1.0;
  std::vector<std::size_t> indices;
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd w(dim);
    for (Eigen::Index j = 0; j < dim; ++j) w(j) = unif(rng);
    const Eigen::MatrixXd pinv = basis.completeOrthogonalDecomposition().pseudoInverse();
    Eigen::VectorXd f = w - basis * (pinv * w);
    const double fn = f.norm();
    if (fn < 1e-12) {
      // The selected signatures already span the projected space.
      result.padded = true;
      break;
    }
    f /= fn;
    Eigen::Index idx = 0;
    (f.transpose() * y).cwiseAbs().maxCoeff(&idx);
    basis.col(i) = y.col(idx);
    indices.push_back(static_cast<std::size_t>(idx));
  }

  // Repeated picks mean the data has lower affine dimension than k - 1.
  std::vector<std::size_t> unique;
  for (std::size_t idx : indices) {
    if (std::find(unique.begin(), unique.end(), idx) == unique.end()) unique.push_back(idx);
  }
  if (unique.size() < static_cast<std::size_t>(k)) {
    result.padded = true;
    const auto extreme = static_cast<std::size_t>(most_extreme());
    while (unique.size() < static_cast<std::size_t>(k)) unique.push_back(extreme);
    std::clog << "dps4un: warning: vca found fewer than " << k
              << " distinct extreme pixels; padding with the most extreme pixel\n";
  }
  result.indices = unique;
  result.endmembers.resize(bands, k);
  for (int i = 0; i < k; ++i) result.endmembers.col(i) = pixels.col(static_cast<Eigen::Index>(unique[static_cast<std::size_t>(i)]));
  return result;
}

}  // namespace dps4un
