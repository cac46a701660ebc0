#include "library/kmeans.hpp"

#include <limits>
#include <random>

#include "core/error.hpp"

namespace dps4un {

namespace {

double sse_of(const Eigen::MatrixXd& points, const std::vector<int>& assign, const Eigen::MatrixXd& centroids) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.cols(); ++i) s += (points.col(i) - centroids.col(assign[static_cast<std::size_t>(i)])).squaredNorm();
  return s;
}

Eigen::MatrixXd plus_plus_init(const Eigen::MatrixXd& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.cols();
  Eigen::MatrixXd centroids(points.rows(), k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.col(0) = points.col(first(rng));
  Eigen::VectorXd d2 = (points.colwise() - centroids.col(0)).colwise().squaredNorm().transpose();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = unif(rng) * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2(i);
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centroids.col(c) = points.col(pick);
    d2 = d2.cwiseMin((points.colwise() - centroids.col(c)).colwise().squaredNorm().transpose());
  }
  return centroids;
}

KMeansResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, int max_iterations) {
  const Eigen::Index n = points.cols();
  const int k = static_cast<int>(centroids.cols());
  KMeansResult r;
  r.assignment.assign(static_cast<std::size_t>(n), -1);

  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int& cur = r.assignment[static_cast<std::size_t>(i)];
      double best = cur >= 0 ? (points.col(i) - centroids.col(cur)).squaredNorm() : std::numeric_limits<double>::infinity();
      int arg = cur;
      for (int c = 0; c < k; ++c) {
        const double d = (points.col(i) - centroids.col(c)).squaredNorm();
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      if (arg != cur) {
        cur = arg;
        changed = true;
      }
    }

    // Refill empty clusters from the largest one.
    for (;;) {
      std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
      for (int a : r.assignment) ++counts[static_cast<std::size_t>(a)];
      int empty = -1;
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
          empty = c;
          break;
        }
      }
      if (empty < 0) break;
      int largest = 0;
      for (int c = 1; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(largest)]) largest = c;
      }
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (r.assignment[static_cast<std::size_t>(i)] != largest) continue;
        const double d = (points.col(i) - centroids.col(largest)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.assignment[static_cast<std::size_t>(far)] = empty;
      centroids.col(empty) = points.col(far);
      changed = true;
    }

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(r.assignment[static_cast<std::size_t>(i)]) += points.col(i);
      counts(r.assignment[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < k; ++c) centroids.col(c) = sums.col(c) / counts(c);
    r.sse_history.push_back(sse_of(points, r.assignment, centroids));
    if (!changed) break;
  }
  r.centroids = std::move(centroids);
  r.sse = sse_of(points, r.assignment, r.centroids);
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& opts) {
  require(k >= 1, ErrorCode::InvalidArgument, "kmeans: k must be >= 1");
  require(points.cols() >= k, ErrorCode::InvalidArgument, "kmeans: more clusters than points");
  require(opts.restarts >= 1 && opts.max_iterations >= 1, ErrorCode::InvalidArgument, "kmeans: invalid options");

  std::mt19937_64 rng(seed);
  KMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    KMeansResult run = lloyd(points, plus_plus_init(points, k, rng), opts.max_iterations);
    if (run.sse < best.sse) best = std::move(run);
  }
  return best;
}

}  // namespace dps4un
