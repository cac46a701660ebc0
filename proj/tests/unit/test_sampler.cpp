#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "prior/denoiser.hpp"
#include "prior/schedule.hpp"
#include "sampler/sampler.hpp"
#include "sampler/simplex.hpp"
#include "support.hpp"

using namespace dps4un;

namespace {

// Exhaustive KKT search over supports: x_S = v_S - mu, x_i = 0 elsewhere, with
// mu chosen for unit sum; the projection is the unique feasible KKT point.
Eigen::VectorXd simplex_oracle(const Eigen::VectorXd& v) {
  const int k = static_cast<int>(v.size());
  for (int mask = 1; mask < (1 << k); ++mask) {
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < k; ++i) {
      if (mask & (1 << i)) {
        sum += v(i);
        ++n;
      }
    }
    const double mu = (sum - 1.0) / n;
    bool ok = true;
    for (int i = 0; i < k && ok; ++i) {
      const double x = v(i) - mu;
      if (mask & (1 << i)) ok = x >= -1e-12;
      else ok = x <= 1e-12;
    }
    if (!ok) continue;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < k; ++i) {
      if (mask & (1 << i)) out(i) = std::max(0.0, v(i) - mu);
    }
    return out;
  }
  return Eigen::VectorXd();
}

DenoiserConfig small_arch(int bands, int clusters) {
  DenoiserConfig c;
  c.bands = bands;
  c.clusters = clusters;
  c.stages = 2;
  c.hidden = 8;
  c.time_dim = 6;
  c.label_dim = 4;
  return c;
}

struct Scene {
  HsiCube cube;
  SuperpixelMap map;
  std::vector<std::vector<int>> ids;
};

Scene small_scene() {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd a = test_support::random_matrix(6, 2, rng, 0.1, 0.9);
  Eigen::MatrixXd s = test_support::random_matrix(2, 36, rng);
  project_columns_to_simplex(s);
  Scene sc;
  sc.cube = test_support::cube_from(a * s, 6, 6);
  std::vector<int> labels(36);
  for (std::size_t i = 0; i < 36; ++i) labels[i] = static_cast<int>((i / 6) / 2);
  sc.map = SuperpixelMap::from_labels(6, 6, labels);
  sc.ids = {{0, 1}, {1, 0}, {0, 1}};
  return sc;
}

bool identical(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("simplex projection examples") {
  Eigen::VectorXd v(3);
  v << 0.2, 0.3, 0.5;
  CHECK(identical(project_simplex(v), v));
  v << 1.0, 1.0, 1.0;
  CHECK(project_simplex(v).isApprox(Eigen::VectorXd::Constant(3, 1.0 / 3.0)));
  v << 5.0, 0.0, -1.0;
  Eigen::VectorXd e(3);
  e << 1.0, 0.0, 0.0;
  CHECK(project_simplex(v).isApprox(e));
  v << 0.5, 0.5, 0.5;
  CHECK(project_simplex(v).isApprox(Eigen::VectorXd::Constant(3, 1.0 / 3.0)));
  CHECK_THROWS_AS(project_simplex(Eigen::VectorXd()), Error);
  v(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(project_simplex(v), Error);
}

TEST_CASE("simplex projection matches the KKT oracle and is idempotent") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> kd(2, 8);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = kd(rng);
    Eigen::VectorXd v(k);
    const double scale = trial % 3 == 0 ? 5.0 : 1.0;
    for (int i = 0; i < k; ++i) v(i) = scale * n(rng);
    const Eigen::VectorXd p = project_simplex(v);
    const Eigen::VectorXd o = simplex_oracle(v);
    REQUIRE(o.size() == k);
    worst = std::max(worst, (p - o).cwiseAbs().maxCoeff());
    CHECK(identical(project_simplex(p), p));
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("simplex projection is non-expansive") {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::VectorXd a = test_support::random_matrix(5, 1, rng, -2, 2);
    const Eigen::VectorXd b = test_support::random_matrix(5, 1, rng, -2, 2);
    CHECK((project_simplex(a) - project_simplex(b)).norm() <= (a - b).norm() + 1e-12);
  }
}

TEST_CASE("fclsu on planted data") {
  std::mt19937_64 rng(3);
  // Orthonormal endmembers: the solution is the projection of A^T x.
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(test_support::random_matrix(8, 3, rng, -1, 1))
                                .householderQ() *
                            Eigen::MatrixXd::Identity(8, 3);
  const Eigen::MatrixXd x = test_support::random_matrix(8, 20, rng, -1, 1);
  const Eigen::MatrixXd s = fclsu_init(x, q);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    CHECK((s.col(j) - project_simplex(q.transpose() * x.col(j))).cwiseAbs().maxCoeff() < 1e-9);
  }

  // Exact mixtures with well separated endmembers are recovered.
  Eigen::MatrixXd a(4, 3);
  a << 0.9, 0.1, 0.2, 0.2, 0.8, 0.1, 0.1, 0.2, 0.9, 0.5, 0.5, 0.5;
  Eigen::MatrixXd truth = test_support::random_matrix(3, 50, rng);
  project_columns_to_simplex(truth);
  CHECK((fclsu_init(a * truth, a, 2000) - truth).cwiseAbs().maxCoeff() < 1e-6);

  // K = 1 is the constant one row.
  const Eigen::MatrixXd s1 = fclsu_init(x, q.col(0));
  CHECK(s1.isApprox(Eigen::MatrixXd::Ones(1, 20)));
  CHECK_THROWS_AS(fclsu_init(x, a), Error);
}

TEST_CASE("fclsu matches a grid search for K = 2") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd a = test_support::random_matrix(5, 2, rng);
  const Eigen::MatrixXd x = test_support::random_matrix(5, 10, rng);
  const Eigen::MatrixXd s = fclsu_init(x, a, 2000);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double best = std::numeric_limits<double>::infinity(), arg = 0.0;
    for (int g = 0; g <= 100000; ++g) {
      const double w = g / 100000.0;
      const double f = (x.col(j) - w * a.col(0) - (1 - w) * a.col(1)).squaredNorm();
      if (f < best) {
        best = f;
        arg = w;
      }
    }
    CHECK(std::abs(s(0, j) - arg) < 2e-5);
  }
}

TEST_CASE("pgd step leaves the constrained optimum fixed") {
  std::mt19937_64 rng(5);
  Eigen::MatrixXd a(4, 3);
  a << 0.9, 0.1, 0.2, 0.2, 0.8, 0.1, 0.1, 0.2, 0.9, 0.5, 0.5, 0.5;
  const Eigen::MatrixXd x = test_support::random_matrix(4, 12, rng);
  const Eigen::MatrixXd s = fclsu_init(x, a, 5000);
  CHECK((pgd_abundance_step(s, a, x, 0.1) - s).cwiseAbs().maxCoeff() < 1e-9);
  // One explicit step.
  Eigen::MatrixXd s0 = Eigen::MatrixXd::Constant(3, 12, 1.0 / 3.0);
  const Eigen::MatrixXd step = pgd_abundance_step(s0, a, x, 0.5);
  for (Eigen::Index j = 0; j < 12; ++j) {
    const Eigen::VectorXd g = a.transpose() * (a * s0.col(j) - x.col(j));
    CHECK((step.col(j) - simplex_oracle(s0.col(j) - 0.5 * g)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(identical(pgd_abundance_step(s0, a, x, 0.0), s0));
}

TEST_CASE("Tweedie identities") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd at = test_support::random_matrix(5, 3, rng, -2, 2);
  const Eigen::MatrixXd eps = test_support::random_matrix(5, 3, rng, -2, 2);
  const double ab = 0.37;
  const Eigen::MatrixXd a = tweedie_from_noise(at, eps, ab, false);
  CHECK(a.isApprox(tweedie_from_score(at, -eps / std::sqrt(1 - ab), ab), 1e-14));
  const Eigen::MatrixXd c = tweedie_from_noise(at, eps, ab, true);
  CHECK(c.minCoeff() >= 0.0);
  CHECK(c.maxCoeff() <= 1.0);

  // Gaussian prior N(mu, s2 I): the posterior mean is known in closed form.
  const double s2 = 0.04;
  const Eigen::MatrixXd mu = test_support::random_matrix(5, 3, rng);
  const double var = ab * s2 + 1 - ab;
  const Eigen::MatrixXd sc = -(at - std::sqrt(ab) * mu) / var;
  const Eigen::MatrixXd post = mu + (std::sqrt(ab) * s2 / var) * (at - std::sqrt(ab) * mu);
  CHECK(tweedie_from_score(at, sc, ab).isApprox(post, 1e-12));

  // tweedie_mean uses the model's noise prediction.
  const DenoiserModel m(small_arch(5, 2), make_schedule(100, 1e-4, 0.02), 3);
  const int ids[] = {0, 1, 1};
  const int ts[] = {40, 40, 40};
  const Eigen::MatrixXd e = denoise(m, at, ts, ids);
  CHECK(identical(tweedie_mean(at, 40, m, ids), tweedie_from_noise(at, e, m.schedule().alpha_bar_at(40), true)));
}

TEST_CASE("fidelity gradient matches central differences") {
  const DenoiserModel m(small_arch(4, 2), make_schedule(100, 1e-4, 0.02), 9);
  std::mt19937_64 rng(10);
  const int t = 20;
  const double ab = m.schedule().alpha_bar_at(t);
  const Eigen::MatrixXd a0 = test_support::random_matrix(4, 2, rng, 0.35, 0.65);
  Eigen::MatrixXd at = std::sqrt(ab) * a0 + std::sqrt(1 - ab) * test_support::random_matrix(4, 2, rng, -0.2, 0.2);
  Eigen::MatrixXd s = test_support::random_matrix(2, 7, rng);
  project_columns_to_simplex(s);
  const Eigen::MatrixXd x = test_support::random_matrix(4, 7, rng);
  const int ids[] = {1, 0};

  auto objective = [&](const Eigen::MatrixXd& a) {
    const int ts[] = {t, t};
    const Eigen::MatrixXd raw = tweedie_from_noise(a, denoise(m, a, ts, ids), ab, false);
    return (x - raw.cwiseMax(0.0).cwiseMin(1.0) * s).squaredNorm();
  };
  const FidelityGradient fg = fidelity_grad(at, x, s, m, t, ids);
  const int ts[] = {t, t};
  const Eigen::MatrixXd raw = tweedie_from_noise(at, denoise(m, at, ts, ids), ab, false);
  REQUIRE(raw.minCoeff() > 1e-3);
  REQUIRE(raw.maxCoeff() < 1 - 1e-3);
  CHECK(fg.residual_norm == doctest::Approx(std::sqrt(objective(at))));
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double saved = at.data()[i], h = 1e-6;
    at.data()[i] = saved + h;
    const double fp = objective(at);
    at.data()[i] = saved - h;
    const double fm = objective(at);
    at.data()[i] = saved;
    const double fd = (fp - fm) / (2 * h);
    CHECK(std::abs(fg.grad.data()[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    num += (fg.grad.data()[i] - fd) * (fg.grad.data()[i] - fd);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-4);

  // Zero residual and zero abundances give a zero gradient.
  CHECK(fidelity_grad(at, fg.a0_hat * s, s, m, t, ids).grad.isZero(1e-12));
  CHECK(fidelity_grad(at, x, Eigen::MatrixXd::Zero(2, 7), m, t, ids).grad.isZero(0.0));
  CHECK_THROWS_AS(fidelity_grad(at, x, Eigen::MatrixXd::Zero(3, 7), m, t, ids), Error);
}

TEST_CASE("DDIM update") {
  const NoiseSchedule sched = make_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 rng(12);
  const Eigen::VectorXd a0 = test_support::random_matrix(6, 1, rng);
  const Eigen::VectorXd eps = test_support::random_matrix(6, 1, rng, -2, 2);
  const Eigen::MatrixXd z = test_support::random_matrix(6, 1, rng, -2, 2);
  const Eigen::MatrixXd at = forward_noise(a0, 700, sched, eps);
  // With the true noise, the deterministic step lands on the same trajectory.
  CHECK(ddim_step(at, 700, 400, eps, 0.0, sched, z).isApprox(forward_noise(a0, 400, sched, eps), 1e-12));
  CHECK(ddim_step(at, 700, 0, eps, 0.0, sched, z).isApprox(a0, 1e-10));
  CHECK(ddim_sigma(700, 400, 0.0, sched) == 0.0);

  const double ab = sched.alpha_bar_at(700), abp = sched.alpha_bar_at(400);
  const double sig = std::sqrt((1 - abp) / (1 - ab) * (1 - ab / abp));
  CHECK(ddim_sigma(700, 400, 1.0, sched) == doctest::Approx(sig));
  const Eigen::MatrixXd expect = std::sqrt(abp) * (at - std::sqrt(1 - ab) * eps) / std::sqrt(ab) +
                                 std::sqrt(1 - abp - sig * sig) * eps + sig * z;
  CHECK(ddim_step(at, 700, 400, eps, 1.0, sched, z).isApprox(expect, 1e-12));

  CHECK_THROWS_AS(ddim_step(at, 400, 400, eps, 0.0, sched, z), Error);
  CHECK_THROWS_AS(ddim_step(at, 400, 700, eps, 0.0, sched, z), Error);
  CHECK_THROWS_AS(ddim_step(at, 700, 400, eps, 1.5, sched, z), Error);
  CHECK_THROWS_AS(ddim_step(at, 700, 400, eps, -0.1, sched, z), Error);
}

TEST_CASE("run_dps4un without guidance follows the prior and keeps the initial abundances") {
  const Scene sc = small_scene();
  const DenoiserModel m(small_arch(6, 2), make_schedule(100, 1e-4, 0.02), 5);
  SamplerConfig cfg;
  cfg.ddim_steps = 5;
  cfg.lambda = 0.0;
  cfg.fidelity_scale = 0.0;
  cfg.seed = 77;
  const UnmixResult r = run_dps4un(sc.cube, sc.map, m, sc.ids, cfg);
  REQUIRE(r.region_endmembers.size() == 3);
  CHECK(r.abundances.rows() == 2);
  CHECK(r.abundances.cols() == 36);

  // Reference: plain DDIM from the same per-region noise, then fclsu on the first estimate.
  const std::vector<int> ts = ddim_timesteps(m.schedule(), 5);
  for (int l = 0; l < 3; ++l) {
    std::uint64_t z = 77 + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(l + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    std::mt19937_64 g(z ^ (z >> 31));
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd a(6, 2);
    for (Eigen::Index j = 0; j < 2; ++j)
      for (Eigen::Index i = 0; i < 6; ++i) a(i, j) = n(g);
    const auto& ids = sc.ids[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd x = sc.cube.gather(sc.map.region_pixels[static_cast<std::size_t>(l)]);
    Eigen::MatrixXd s0, a0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const int t = ts[i];
      const int tp = i + 1 < ts.size() ? ts[i + 1] : 0;
      const int tt[] = {t, t};
      const Eigen::MatrixXd eps = denoise(m, a, tt, ids);
      a0 = tweedie_from_noise(a, eps, m.schedule().alpha_bar_at(t), true);
      if (i == 0) s0 = fclsu_init(x, a0);
      a = ddim_step(a, t, tp, eps, 0.0, m.schedule(), Eigen::MatrixXd::Zero(6, 2));
    }
    CHECK(r.region_endmembers[static_cast<std::size_t>(l)].isApprox(a0, 1e-12));
    const auto& px = sc.map.region_pixels[static_cast<std::size_t>(l)];
    for (std::size_t j = 0; j < px.size(); ++j) {
      CHECK((r.abundances.col(static_cast<Eigen::Index>(px[j])) - s0.col(static_cast<Eigen::Index>(j)))
                .cwiseAbs()
                .maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("run_dps4un is deterministic and independent of region order") {
  const Scene sc = small_scene();
  const DenoiserModel m(small_arch(6, 2), make_schedule(100, 1e-4, 0.02), 5);
  for (double eta : {0.0, 0.5}) {
    SamplerConfig cfg;
    cfg.ddim_steps = 6;
    cfg.eta = eta;
    cfg.fidelity_scale = 0.3;
    cfg.seed = 3;
    cfg.record_trajectory = true;
    const UnmixResult a = run_dps4un(sc.cube, sc.map, m, sc.ids, cfg);
    const UnmixResult b = run_dps4un(sc.cube, sc.map, m, sc.ids, cfg);
    cfg.region_order = {2, 0, 1};
    const UnmixResult c = run_dps4un(sc.cube, sc.map, m, sc.ids, cfg);
    for (const UnmixResult* other : {&b, &c}) {
      CHECK(identical(a.abundances, other->abundances));
      CHECK(identical(a.ensemble_mean, other->ensemble_mean));
      CHECK(identical(a.ensemble_std, other->ensemble_std));
      for (std::size_t l = 0; l < 3; ++l) CHECK(identical(a.region_endmembers[l], other->region_endmembers[l]));
    }
    CHECK(a.trajectory.size() == 6 * 3 * 2);
    for (Eigen::Index j = 0; j < a.abundances.cols(); ++j) {
      CHECK(a.abundances.col(j).minCoeff() >= 0.0);
      CHECK(a.abundances.col(j).sum() == doctest::Approx(1.0));
    }
    // Ensemble statistics over regions.
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(6, 2);
    for (const auto& e : a.region_endmembers) mean += e / 3.0;
    CHECK(a.ensemble_mean.isApprox(mean, 1e-12));
  }
  SamplerConfig cfg;
  cfg.ddim_steps = 2;
  cfg.seed = 4;
  const UnmixResult a = run_dps4un(sc.cube, sc.map, m, sc.ids, cfg);
  cfg.seed = 5;
  CHECK_FALSE(identical(a.abundances, run_dps4un(sc.cube, sc.map, m, sc.ids, cfg).abundances));
}

TEST_CASE("run_dps4un validates its inputs") {
  const Scene sc = small_scene();
  const DenoiserModel m(small_arch(6, 2), make_schedule(100, 1e-4, 0.02), 5);
  SamplerConfig cfg;
  cfg.ddim_steps = 2;
  CHECK_THROWS_AS(run_dps4un(sc.cube, sc.map, m, {{0, 1}, {0, 1}}, cfg), Error);
  CHECK_THROWS_AS(run_dps4un(sc.cube, sc.map, m, {{0, 1}, {0, 1}, {0, 2}}, cfg), Error);
  CHECK_THROWS_AS(run_dps4un(sc.cube, sc.map, m, {{0, 1}, {0, 1}, {0}}, cfg), Error);
  const DenoiserModel wrong(small_arch(5, 2), make_schedule(100, 1e-4, 0.02), 5);
  CHECK_THROWS_AS(run_dps4un(sc.cube, sc.map, wrong, sc.ids, cfg), Error);
  SamplerConfig bad = cfg;
  bad.region_order = {0, 0, 1};
  CHECK_THROWS_AS(run_dps4un(sc.cube, sc.map, m, sc.ids, bad), Error);
  bad = cfg;
  bad.ddim_steps = 0;
  CHECK_THROWS_AS(run_dps4un(sc.cube, sc.map, m, sc.ids, bad), Error);
  bad = cfg;
  bad.fidelity_scale = -1;
  CHECK_THROWS_AS(run_dps4un(sc.cube, sc.map, m, sc.ids, bad), Error);
}

TEST_CASE("global baseline on noiseless data") {
  std::mt19937_64 rng(14);
  Eigen::MatrixXd a(5, 3);
  a << 0.9, 0.1, 0.2, 0.2, 0.8, 0.1, 0.1, 0.2, 0.9, 0.5, 0.5, 0.5, 0.3, 0.6, 0.2;
  Eigen::MatrixXd s = test_support::random_matrix(3, 64, rng);
  s = (-s.array().log()).matrix();
  for (Eigen::Index j = 0; j < s.cols(); ++j) s.col(j) /= s.col(j).sum();
  s.col(0) << 1, 0, 0;
  s.col(1) << 0, 1, 0;
  s.col(2) << 0, 0, 1;
  const BaselineResult b = unmix_vca_fclsu(test_support::cube_from(a * s, 8, 8), 3, 1, 3000);
  CHECK(b.endmembers.cols() == 3);
  CHECK((b.endmembers * b.abundances - a * s).cwiseAbs().maxCoeff() < 1e-5);
}

}
