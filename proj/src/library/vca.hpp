#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace dps4un {

struct VcaResult {
  /// C x k, columns copied verbatim from the input pixels.
  Eigen::MatrixXd endmembers;
  std::vector<std::size_t> indices;
  double snr_db = 0.0;
  bool projective = false;
  /// Set when the data could not supply k distinct extreme pixels and the
  /// remaining slots were padded.
  bool padded = false;
};

/// Vertex component analysis on a C x n pixel matrix.
VcaResult vca(const Eigen::MatrixXd& pixels, int k, std::uint64_t seed);

/// SNR estimate used to choose between the projective and PCA projections.
double vca_estimate_snr(const Eigen::MatrixXd& pixels, const Eigen::VectorXd& mean, const Eigen::MatrixXd& projected);

}  // namespace dps4un
