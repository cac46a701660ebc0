#include <doctest.h>

#include <cmath>
#include <fstream>
#include <queue>
#include <set>

#include "core/error.hpp"
#include "segmentation/slic.hpp"
#include "support.hpp"

using namespace dps4un;
using test_support::TempDir;

namespace {

// Number of 4-connected components of each label, by flood fill.
std::vector<int> component_counts(const std::vector<int>& labels, int h, int w, int regions) {
  std::vector<int> counts(static_cast<std::size_t>(regions), 0);
  std::vector<char> seen(labels.size(), 0);
  for (int start = 0; start < h * w; ++start) {
    if (seen[start]) continue;
    const int lab = labels[start];
    ++counts[static_cast<std::size_t>(lab)];
    std::queue<int> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const int p = q.front();
      q.pop();
      const int y = p / w, x = p % w;
      const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int q2 = n[0] * w + n[1];
        if (!seen[q2] && labels[q2] == lab) {
          seen[q2] = 1;
          q.push(q2);
        }
      }
    }
  }
  return counts;
}

void check_partition(const SuperpixelMap& m) {
  std::size_t total = 0;
  for (int l = 0; l < m.region_count; ++l) {
    const auto& px = m.region_pixels[static_cast<std::size_t>(l)];
    CHECK(!px.empty());
    total += px.size();
    for (auto p : px) CHECK(m.labels[p] == l);
  }
  CHECK(total == m.height * m.width);
}

HsiCube constant_cube(std::size_t h, std::size_t w, std::size_t c, float v) {
  return HsiCube(h, w, c, std::vector<float>(h * w * c, v));
}

}  // namespace

TEST_SUITE("segmentation") {

TEST_CASE("constant 4x4 cube with L=4 gives four 2x2 blocks") {
  SlicParams p;
  p.target_regions = 4;
  p.compactness = 10;
  const auto m = slic_segment(constant_cube(4, 4, 3, 0.5f), p);
  REQUIRE(m.region_count == 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      CHECK(m.labels[static_cast<std::size_t>(y * 4 + x)] == m.labels[static_cast<std::size_t>((y / 2 * 2) * 4 + x / 2 * 2)]);
    }
  }
  for (const auto& r : m.region_pixels) CHECK(r.size() == 4);
}

TEST_CASE("two spectrally distinct halves split at the column boundary") {
  const std::size_t h = 8, w = 8, c = 5;
  std::vector<float> v(h * w * c);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t b = 0; b < c; ++b) v[p * c + b] = (p % w) < 4 ? 0.1f : 0.9f;
  }
  HsiCube cube(h, w, c, v);
  SlicParams p;
  p.target_regions = 2;
  p.compactness = 0.5;  // make the spectral term matter
  SlicTrace trace;
  const auto m = slic_segment(cube, p, &trace);
  REQUIRE(m.region_count == 2);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      CHECK((m.labels[y * w + x] == m.labels[y * w]) == (x < 4));
    }
  }
  // Brute-force nearest center with the same distance, over all centers.
  const Eigen::MatrixXd px = cube.to_matrix();
  for (std::size_t q = 0; q < h * w; ++q) {
    double best = 1e300;
    int arg = -1;
    for (std::size_t k = 0; k < trace.centers.size(); ++k) {
      const auto& ctr = trace.centers[k];
      const double d = slic_distance_sq(double(q % w) - ctr.x, double(q / w) - ctr.y,
                                        (px.col(static_cast<Eigen::Index>(q)) - ctr.spectrum).norm(),
                                        trace.grid_interval, p.compactness, false);
      if (d < best) {
        best = d;
        arg = static_cast<int>(k);
      }
    }
    CHECK(trace.raw_labels[q] == arg);
  }
}

TEST_CASE("distance follows the literal formula and the squared variant") {
  const double e = 2.0, m = 3.0;
  CHECK(slic_distance_sq(1.0, 2.0, 4.0, e, m, false) == doctest::Approx(5.0 / 4.0 + 4.0 / 9.0));
  CHECK(slic_distance_sq(1.0, 2.0, 4.0, e, m, true) == doctest::Approx(5.0 / 4.0 + 16.0 / 9.0));
}

TEST_CASE("invalid parameters are rejected") {
  SlicParams p;
  p.target_regions = 17;
  CHECK_THROWS_AS(slic_segment(constant_cube(4, 4, 2, 0.f), p), Error);
  p.target_regions = 2;
  p.compactness = 0.0;
  CHECK_THROWS_AS(slic_segment(constant_cube(4, 4, 2, 0.f), p), Error);
}

TEST_CASE("random scenes: partition, connectivity, monotone cost, region count") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 10 + trial % 7, w = 12 + trial % 5, c = 4;
    const int L = 3 + trial % 9;
    const Eigen::MatrixXd px = test_support::random_matrix(c, h * w, rng);
    SlicParams p;
    p.target_regions = L;
    p.squared_spectral = trial % 2 == 1;
    SlicTrace trace;
    const auto m = slic_segment(test_support::cube_from(px, h, w), p, &trace);
    check_partition(m);
    CHECK(regions_connected(m));
    for (int n : component_counts(m.labels, h, w, m.region_count)) CHECK(n == 1);
    for (std::size_t i = 1; i < trace.costs.size(); ++i) CHECK(trace.costs[i] <= trace.costs[i - 1] * (1 + 1e-12));
    CHECK(m.region_count >= 0.5 * L);
    CHECK(m.region_count <= 1.5 * L);
  }
}

TEST_CASE("segmentation is deterministic") {
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd px = test_support::random_matrix(3, 20 * 20, rng);
  SlicParams p;
  p.target_regions = 9;
  CHECK(slic_segment(test_support::cube_from(px, 20, 20), p).labels ==
        slic_segment(test_support::cube_from(px, 20, 20), p).labels);
}

TEST_CASE("connectivity enforcement") {
  SUBCASE("connected map is unchanged") {
    std::vector<int> l = {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3};
    const auto m = SuperpixelMap::from_labels(4, 4, l);
    CHECK(enforce_connectivity(m).labels == m.labels);
  }
  SUBCASE("single-pixel orphan joins its neighbour") {
    // Region 0 owns the left half plus an isolated pixel inside region 1.
    std::vector<int> l(6 * 6);
    for (int p = 0; p < 36; ++p) l[p] = (p % 6) < 3 ? 0 : 1;
    l[2 * 6 + 4] = 0;
    const auto m = enforce_connectivity(SuperpixelMap::from_labels(6, 6, l));
    CHECK(m.region_count == 2);
    CHECK(m.labels[2 * 6 + 4] == m.labels[2 * 6 + 5]);
    CHECK(regions_connected(m));
  }
  SUBCASE("random labelings become connected (flood-fill oracle)") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> lab(0, 3);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<int> l(36);
      for (auto& x : l) x = lab(rng);
      const auto m = enforce_connectivity(SuperpixelMap::from_labels(6, 6, l));
      check_partition(m);
      for (int n : component_counts(m.labels, 6, 6, m.region_count)) CHECK(n == 1);
    }
  }
}

TEST_CASE("merge_small_regions leaves no region below the threshold") {
  std::vector<int> l(8 * 8, 0);
  for (int p = 0; p < 64; ++p) l[p] = (p % 8) < 4 ? 0 : 1;
  l[0] = 2;  // one-pixel region
  const auto m = merge_small_regions(SuperpixelMap::from_labels(8, 8, l), 3);
  CHECK(m.region_count == 2);
  for (const auto& r : m.region_pixels) CHECK(r.size() >= 3);
}

TEST_CASE("label export and round trip") {
  TempDir dir("slic");
  std::vector<int> l = {0, 1, 1, 2, 2, 2};
  const auto m = SuperpixelMap::from_labels(2, 3, l);
  save_labels(m, dir / "l.f32");
  CHECK(load_labels(dir / "l.f32").labels == m.labels);
  write_labels_pgm16(m, dir / "l.pgm");
  std::ifstream pgm(dir / "l.pgm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  pgm >> magic >> w >> h >> maxv;
  pgm.get();
  CHECK(magic == "P5");
  CHECK(w == 3);
  CHECK(h == 2);
  unsigned char px[12];
  pgm.read(reinterpret_cast<char*>(px), 12);
  CHECK(pgm.gcount() == 12);
  CHECK(px[10] * 256 + px[11] == 2);  // big-endian 16-bit
  write_labels_csv(m, dir / "l.csv");
  std::ifstream csv(dir / "l.csv");
  std::string first;
  std::getline(csv, first);
  CHECK(first == "0,1,1");
}

}
