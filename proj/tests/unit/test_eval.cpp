#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "eval/metrics.hpp"
#include "support.hpp"

using namespace dps4un;

namespace {

double loop_rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::Index k) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) s += (a(k, j) - b(k, j)) * (a(k, j) - b(k, j));
  return std::sqrt(s / static_cast<double>(a.cols()));
}

double loop_sad(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Eigen::Index ca, Eigen::Index cb) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    dot += a(i, ca) * b(i, cb);
    na += a(i, ca) * a(i, ca);
    nb += b(i, cb) * b(i, cb);
  }
  return std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0));
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("metric examples") {
  Eigen::MatrixXd s(2, 4);
  s << 1, 0, 0.5, 0.25, 0, 1, 0.5, 0.75;
  CHECK(rmse(s, s).mean == 0.0);
  Eigen::MatrixXd t = s;
  t.row(0).array() += 0.1;
  const MetricValues r = rmse(t, s);
  CHECK(r.per_endmember[0] == doctest::Approx(0.1));
  CHECK(r.per_endmember[1] == 0.0);
  CHECK(r.mean == doctest::Approx(0.05));

  Eigen::MatrixXd e(3, 2);
  e << 1, 0, 0, 1, 0, 0;
  Eigen::MatrixXd f(3, 2);
  f << 0, 2, 1, 0, 0, 0;
  const MetricValues a = sad(f, e);
  CHECK(a.per_endmember[0] == doctest::Approx(std::acos(-1.0) / 2));
  CHECK(a.per_endmember[1] == doctest::Approx(std::acos(-1.0) / 2));
  CHECK(sad(3.0 * e, e).mean == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(rmse(s, s.leftCols(3)), Error);
  CHECK_THROWS_AS(sad(e, e.leftCols(1)), Error);
}

TEST_CASE("rmse and sad agree with scalar loops") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd a = test_support::random_matrix(4, 30, rng);
    const Eigen::MatrixXd b = test_support::random_matrix(4, 30, rng);
    const MetricValues r = rmse(a, b);
    double mean = 0.0;
    for (Eigen::Index k = 0; k < 4; ++k) {
      CHECK(std::abs(r.per_endmember[static_cast<std::size_t>(k)] - loop_rmse(a, b, k)) < 1e-9);
      mean += loop_rmse(a, b, k) / 4.0;
    }
    CHECK(std::abs(r.mean - mean) < 1e-9);

    const Eigen::MatrixXd e = test_support::random_matrix(20, 4, rng);
    const Eigen::MatrixXd f = test_support::random_matrix(20, 4, rng);
    const MetricValues v = sad(e, f);
    for (Eigen::Index k = 0; k < 4; ++k) {
      CHECK(std::abs(v.per_endmember[static_cast<std::size_t>(k)] - loop_sad(e, f, k, k)) < 1e-9);
    }
  }
}

TEST_CASE("matching agrees with factorial enumeration") {
  std::mt19937_64 rng(2);
  for (int k = 1; k <= 5; ++k) {
    for (int trial = 0; trial < 40; ++trial) {
      const Eigen::MatrixXd est = test_support::random_matrix(10, k, rng);
      const Eigen::MatrixXd ref = test_support::random_matrix(10, k, rng);
      std::vector<int> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), 0);
      double best = 1e300;
      do {
        double total = 0.0;
        for (int i = 0; i < k; ++i) total += loop_sad(est, ref, i, perm[static_cast<std::size_t>(i)]);
        best = std::min(best, total);
      } while (std::next_permutation(perm.begin(), perm.end()));
      const std::vector<int> m = match_endmembers(est, ref);
      double total = 0.0;
      for (int i = 0; i < k; ++i) total += loop_sad(est, ref, i, m[static_cast<std::size_t>(i)]);
      CHECK(std::abs(total - best) < 1e-9);
      std::vector<int> sorted = m;
      std::sort(sorted.begin(), sorted.end());
      for (int i = 0; i < k; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    }
  }
}

TEST_CASE("matching recovers shuffled and scaled columns") {
  std::mt19937_64 rng(3);
  for (int k : {3, 6, 10}) {
    const Eigen::MatrixXd ref = test_support::random_matrix(40, k, rng, 0.0, 1.0).array().square();
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd est(40, k);
    for (int i = 0; i < k; ++i) est.col(i) = (0.5 + i) * ref.col(perm[static_cast<std::size_t>(i)]);
    CHECK(match_endmembers(est, ref) == perm);
    CHECK(sad(align_columns(est, perm), ref).mean < 1e-7);

    Eigen::MatrixXd s_ref = test_support::random_matrix(k, 15, rng);
    Eigen::MatrixXd s_est(k, 15);
    for (int i = 0; i < k; ++i) s_est.row(i) = s_ref.row(perm[static_cast<std::size_t>(i)]);
    CHECK((align_rows(s_est, perm).array() == s_ref.array()).all());
  }
}

TEST_CASE("evaluate and reports") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd e = test_support::random_matrix(12, 3, rng);
  const Eigen::MatrixXd s = test_support::random_matrix(3, 25, rng);
  Eigen::MatrixXd e2(12, 3), s2(3, 25);
  const int perm[] = {2, 0, 1};
  for (int i = 0; i < 3; ++i) {
    e2.col(i) = e.col(perm[i]);
    s2.row(i) = s.row(perm[i]);
  }
  s2.row(0).array() += 0.2;  // estimated row 0 is reference row 2
  const EvalReport r = evaluate(e2, s2, e, s, {"a", "b", "c"});
  CHECK(r.matching == std::vector<int>{2, 0, 1});
  CHECK(r.asad < 1e-7);
  REQUIRE(r.per_endmember_rmse.size() == 3);
  CHECK(r.per_endmember_rmse[2] == doctest::Approx(0.2));
  CHECK(r.per_endmember_rmse[0] == doctest::Approx(0.0));
  CHECK(r.armse == doctest::Approx(0.2 / 3));
  const nlohmann::json j = report_to_json(r);
  CHECK(j.at("armse").get<double>() == doctest::Approx(r.armse));
  CHECK(j.at("asad").get<double>() == doctest::Approx(r.asad));
  const std::string table = format_report_table(r);
  CHECK(table.find("c") != std::string::npos);
  CHECK(table.find("RMSE") != std::string::npos);

  const EvalReport no_s = evaluate(e2, Eigen::MatrixXd(), e, Eigen::MatrixXd());
  CHECK(no_s.per_endmember_rmse.empty());
  CHECK(no_s.matching == r.matching);
}

}
