#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/container.hpp"
#include "core/error.hpp"
#include "synth/scene.hpp"
#include "support.hpp"

using namespace dps4un;

TEST_SUITE("synth") {

TEST_CASE("noiseless scene is an exact region-wise mixture") {
  SceneConfig cfg;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.seed = 5;
  const SynthScene sc = make_scene(cfg);
  CHECK(sc.cube.height() == 32);
  CHECK(sc.cube.width() == 32);
  CHECK(sc.cube.bands() == 64);
  CHECK(sc.endmembers.cols() == 3);
  CHECK(sc.endmembers.minCoeff() >= 0.1 - 1e-12);
  CHECK(sc.endmembers.maxCoeff() <= 0.9 + 1e-12);
  CHECK(sc.region_endmembers.size() == 16);
  const Eigen::MatrixXd x = sc.cube.to_matrix();
  for (std::size_t p = 0; p < sc.cube.pixels(); ++p) {
    const auto j = static_cast<Eigen::Index>(p);
    const Eigen::VectorXd s = sc.abundances.col(j);
    CHECK(s.minCoeff() >= 0.0);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
    const auto& a = sc.region_endmembers[static_cast<std::size_t>(sc.region_of_pixel[p])];
    CHECK((sc.clean.col(j) - a * s).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((x.col(j) - sc.clean.col(j)).cwiseAbs().maxCoeff() < 1e-6);
  }
  // Pixels in one 8x8 block share a region.
  CHECK(sc.region_of_pixel[0] == sc.region_of_pixel[7 * 32 + 7]);
  CHECK(sc.region_of_pixel[0] != sc.region_of_pixel[8]);
  CHECK(sc.measured_snr_db > 100.0);  // float32 storage only
}

TEST_CASE("zero variability and a single endmember") {
  SceneConfig cfg;
  cfg.variability = 0.0;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  const SynthScene sc = make_scene(cfg);
  for (const auto& a : sc.region_endmembers) CHECK((a.array() == sc.endmembers.array()).all());

  cfg.endmembers = 1;
  const SynthScene one = make_scene(cfg);
  CHECK((one.abundances.array() == 1.0).all());
  for (Eigen::Index j = 0; j < one.clean.cols(); ++j) CHECK(one.clean.col(j).isApprox(one.endmembers.col(0)));
}

TEST_CASE("noise level matches the requested SNR") {
  for (double snr : {10.0, 30.0, 45.0}) {
    SceneConfig cfg;
    cfg.snr_db = snr;
    cfg.seed = 11;
    const SynthScene sc = make_scene(cfg);
    CHECK(std::abs(sc.measured_snr_db - snr) <= 0.5);
    CHECK(std::abs(measured_snr_db(sc.clean, sc.cube.to_matrix()) - snr) <= 0.5);
  }
}

TEST_CASE("scenes are reproducible from the seed") {
  SceneConfig cfg;
  cfg.height = 16;
  cfg.width = 24;
  cfg.bands = 10;
  const SynthScene a = make_scene(cfg);
  const SynthScene b = make_scene(cfg);
  CHECK(std::ranges::equal(a.cube.data(), b.cube.data()));
  CHECK((a.abundances.array() == b.abundances.array()).all());
  cfg.seed = 1;
  CHECK_FALSE(std::ranges::equal(make_scene(cfg).cube.data(), a.cube.data()));
}

TEST_CASE("invalid configurations and persistence") {
  SceneConfig cfg;
  cfg.endmembers = 0;
  CHECK_THROWS_AS(make_scene(cfg), Error);
  cfg = SceneConfig{};
  cfg.variability = -0.1;
  CHECK_THROWS_AS(make_scene(cfg), Error);
  cfg = SceneConfig{};
  cfg.height = 0;
  CHECK_THROWS_AS(make_scene(cfg), Error);

  cfg = SceneConfig{};
  cfg.height = 8;
  cfg.width = 8;
  cfg.bands = 6;
  const SynthScene sc = make_scene(cfg);
  test_support::TempDir dir("synth");
  save_scene(sc, dir.path());
  const HsiCube back = load_cube(dir / "cube.f32");
  CHECK(std::ranges::equal(back.data(), sc.cube.data()));
  const Eigen::MatrixXd e = load_matrix(dir / "endmembers.f32");
  CHECK(e.isApprox(sc.endmembers, 1e-6));
  CHECK(load_matrix(dir / "region_endmembers.f32").rows() == 6 * static_cast<Eigen::Index>(sc.region_endmembers.size()));
}

}
