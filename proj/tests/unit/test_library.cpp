#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "core/error.hpp"
#include "library/kmeans.hpp"
#include "library/library.hpp"
#include "library/vca.hpp"
#include "support.hpp"

using namespace dps4un;
using test_support::TempDir;

namespace {

// Noiseless mixtures of planted vertices; the vertices themselves are
// included as pixels at the given positions.
Eigen::MatrixXd planted_mixtures(const Eigen::MatrixXd& vertices, int n, std::mt19937_64& rng) {
  const Eigen::Index k = vertices.cols();
  std::gamma_distribution<double> g(1.0, 1.0);
  Eigen::MatrixXd x(vertices.rows(), n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd s(k);
    for (Eigen::Index i = 0; i < k; ++i) s(i) = g(rng);
    x.col(j) = vertices * (s / s.sum());
  }
  for (Eigen::Index i = 0; i < k; ++i) x.col(3 + 7 * i) = vertices.col(i);
  return x;
}

bool is_column_of(const Eigen::VectorXd& v, const Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if ((m.col(j) - v).norm() == 0.0) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("library") {

TEST_CASE("VCA recovers planted vertices") {
  std::mt19937_64 rng(2);
  for (int k : {2, 3, 4, 6}) {
    const Eigen::MatrixXd e = test_support::random_matrix(20, k, rng, 0.05, 1.0);
    const Eigen::MatrixXd x = planted_mixtures(e, 300, rng);
    const VcaResult r = vca(x, k, 17);
    REQUIRE(r.endmembers.cols() == k);
    for (Eigen::Index i = 0; i < k; ++i) {
      double best = 10;
      for (Eigen::Index j = 0; j < k; ++j) best = std::min(best, spectral_angle(r.endmembers.col(j), e.col(i)));
      CHECK(best < 1e-3);
    }
    for (Eigen::Index j = 0; j < k; ++j) CHECK(is_column_of(r.endmembers.col(j), x));
    CHECK_FALSE(r.padded);
  }
}

TEST_CASE("VCA edge cases") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd x = test_support::random_matrix(5, 30, rng);
  SUBCASE("k = 1 returns the pixel farthest from the mean") {
    const VcaResult r = vca(x, 1, 0);
    const Eigen::VectorXd mean = x.rowwise().mean();
    Eigen::Index far = 0;
    (x.colwise() - mean).colwise().norm().maxCoeff(&far);
    CHECK(r.indices.at(0) == far);
  }
  SUBCASE("too few pixels or bad k") {
    CHECK_THROWS_AS(vca(x.leftCols(2), 3, 0), Error);
    CHECK_THROWS_AS(vca(x, 0, 0), Error);
  }
  SUBCASE("rank-deficient input is padded") {
    Eigen::MatrixXd flat(5, 10);
    for (int j = 0; j < 10; ++j) flat.col(j) = Eigen::VectorXd::Constant(5, 0.1 * (j % 2 + 1));
    const VcaResult r = vca(flat, 3, 0);
    CHECK(r.endmembers.cols() == 3);
    CHECK(r.padded);
  }
  SUBCASE("deterministic for a seed") {
    CHECK(vca(x, 3, 8).indices == vca(x, 3, 8).indices);
  }
}

TEST_CASE("k-means matches the optimal 2-partition on planted groups") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 10;
    Eigen::MatrixXd pts(3, n);
    std::vector<int> truth(n);
    for (int j = 0; j < n; ++j) {
      truth[j] = (j * 7 + trial) % 3 == 0 ? 1 : 0;
      for (int d = 0; d < 3; ++d) pts(d, j) = (truth[j] ? 2.0 : -1.0) + noise(rng);
    }
    // Exhaustive search over all 2-partitions.
    double best = 1e300;
    unsigned best_mask = 0;
    for (unsigned mask = 1; mask < (1u << n) - 1; ++mask) {
      Eigen::Vector3d c0 = Eigen::Vector3d::Zero(), c1 = Eigen::Vector3d::Zero();
      int n0 = 0, n1 = 0;
      for (int j = 0; j < n; ++j) {
        if (mask >> j & 1u) {
          c1 += pts.col(j);
          ++n1;
        } else {
          c0 += pts.col(j);
          ++n0;
        }
      }
      c0 /= n0;
      c1 /= n1;
      double sse = 0;
      for (int j = 0; j < n; ++j) sse += (pts.col(j) - ((mask >> j & 1u) ? c1 : c0)).squaredNorm();
      if (sse < best) {
        best = sse;
        best_mask = mask;
      }
    }
    const KMeansResult r = kmeans(pts, 2, 100 + trial);
    CHECK(r.sse == doctest::Approx(best).epsilon(1e-9));
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        CHECK((r.assignment[j] == r.assignment[i]) == (((best_mask >> j) & 1u) == ((best_mask >> i) & 1u)));
        CHECK((r.assignment[j] == r.assignment[i]) == (truth[j] == truth[i]));
      }
    }
  }
}

TEST_CASE("k-means limits and monotone SSE") {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd pts = test_support::random_matrix(4, 12, rng);
  const KMeansResult all = kmeans(pts, 12, 1);
  CHECK(all.sse == doctest::Approx(0.0));
  std::vector<int> ids = all.assignment;
  std::sort(ids.begin(), ids.end());
  CHECK(std::unique(ids.begin(), ids.end()) - ids.begin() == 12);

  const KMeansResult one = kmeans(pts, 1, 1);
  for (int a : one.assignment) CHECK(a == 0);
  CHECK((one.centroids.col(0) - pts.rowwise().mean()).norm() < 1e-12);

  const Eigen::MatrixXd big = test_support::random_matrix(3, 200, rng);
  const KMeansResult r = kmeans(big, 5, 3);
  for (std::size_t i = 1; i < r.sse_history.size(); ++i) CHECK(r.sse_history[i] <= r.sse_history[i - 1] + 1e-12);
  for (int c = 0; c < 5; ++c) CHECK(std::count(r.assignment.begin(), r.assignment.end(), c) > 0);
  CHECK_THROWS_AS(kmeans(pts, 13, 0), Error);
}

TEST_CASE("build_library on planted regions") {
  // Left half mixes materials {0,1}, right half {2,3}; pure pixels present.
  std::mt19937_64 rng(10);
  const Eigen::MatrixXd e = test_support::random_matrix(16, 4, rng, 0.05, 1.0);
  const std::size_t h = 6, w = 8;
  Eigen::MatrixXd px(16, h * w);
  std::vector<int> labels(h * w);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t p = 0; p < h * w; ++p) {
    const bool right = p % w >= 4;
    const double a = (p / w == 0) ? 1.0 : (p / w == 1) ? 0.0 : u(rng);
    px.col(static_cast<Eigen::Index>(p)) = a * e.col(right ? 2 : 0) + (1 - a) * e.col(right ? 3 : 1);
    labels[p] = right ? 1 : 0;
  }
  const HsiCube cube = test_support::cube_from(px, h, w);
  const auto map = SuperpixelMap::from_labels(h, w, labels);
  const SpectralLibrary lib = build_library(cube, map, 2, 3);
  REQUIRE(lib.size() == 4);
  CHECK(lib.per_region == 2);
  for (Eigen::Index j = 0; j < lib.size(); ++j) {
    const int region = lib.source_region[static_cast<std::size_t>(j)];
    const int m0 = region == 0 ? 0 : 2;
    const double sad = std::min(spectral_angle(lib.entries.col(j), e.col(m0)),
                                spectral_angle(lib.entries.col(j), e.col(m0 + 1)));
    CHECK(sad < 1e-3);
    CHECK(is_column_of(lib.entries.col(j), cube.gather(map.region_pixels[static_cast<std::size_t>(region)])));
    CHECK(lib.cluster_id[static_cast<std::size_t>(j)] == SpectralLibrary::kUnassigned);
  }
  CHECK_FALSE(lib.clustered());

  SUBCASE("single region gives P = K") {
    const auto one = SuperpixelMap::from_labels(h, w, std::vector<int>(h * w, 0));
    CHECK(build_library(cube, one, 4, 0).size() == 4);
  }
  SUBCASE("region smaller than K is an error") {
    std::vector<int> l2 = labels;
    l2[0] = 2;
    CHECK_THROWS_AS(build_library(cube, SuperpixelMap::from_labels(h, w, l2), 2, 0), Error);
  }
  SUBCASE("clustering and slot conditions") {
    const SpectralLibrary c = assign_clusters(lib, 4, 1);
    CHECK(c.cluster_count == 4);
    CHECK(c.centroids.cols() == 4);
    for (int id : c.cluster_id) CHECK((id >= 0 && id < 4));
    const auto slots = slot_conditions(c, map.region_count);
    REQUIRE(slots.size() == 2);
    for (const auto& s : slots) {
      CHECK(s.size() == 2);
      CHECK(s[0] < s[1]);
    }
  }
}

TEST_CASE("slot conditions with K_c = K cover every id in every region") {
  std::mt19937_64 rng(12);
  const Eigen::MatrixXd e = test_support::random_matrix(10, 3, rng, 0.05, 1.0);
  const Eigen::MatrixXd x = planted_mixtures(e, 16 * 16, rng);
  const HsiCube cube = test_support::cube_from(x, 16, 16);
  std::vector<int> labels(256);
  for (int p = 0; p < 256; ++p) labels[p] = (p / 16 / 8) * 2 + (p % 16) / 8;
  const auto map = SuperpixelMap::from_labels(16, 16, labels);
  const SpectralLibrary lib = assign_clusters(build_library(cube, map, 3, 0), 3, 0);
  for (const auto& s : slot_conditions(lib, map.region_count)) CHECK(s == std::vector<int>{0, 1, 2});
}

TEST_CASE("library persistence") {
  TempDir dir("lib");
  std::mt19937_64 rng(14);
  SpectralLibrary lib;
  lib.entries = test_support::random_matrix(6, 4, rng);
  lib.source_region = {0, 0, 1, 1};
  lib.cluster_id = {1, 0, 0, 1};
  lib.cluster_count = 2;
  lib.per_region = 2;
  lib.centroids = test_support::random_matrix(6, 2, rng);
  save_library(lib, dir / "lib.f32");
  const SpectralLibrary back = load_library(dir / "lib.f32");
  CHECK(back.entries == lib.entries.cast<float>().cast<double>());
  CHECK(back.source_region == lib.source_region);
  CHECK(back.cluster_id == lib.cluster_id);
  CHECK(back.cluster_count == 2);
  CHECK(back.per_region == 2);
  write_library_csv(lib, dir / "lib.csv");
  std::ifstream csv(dir / "lib.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  CHECK(header.rfind("region,cluster_id,b0", 0) == 0);
  CHECK(row.rfind("0,1,", 0) == 0);
}

}
