#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace dps4un {

struct KMeansOptions {
  int max_iterations = 100;
  int restarts = 5;
};

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;  // dims x k
  double sse = 0.0;
  /// Within-cluster SSE after every Lloyd update of the winning restart.
  std::vector<double> sse_history;
};

/// Lloyd's algorithm on the columns of `points` with k-means++ seeding,
/// best of `restarts` runs by SSE. Empty clusters are refilled with the
/// member of the largest cluster farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& opts = {});

}  // namespace dps4un
