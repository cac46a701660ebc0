#include "sampler/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "core/error.hpp"

namespace dps4un {

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index k = v.size();
  require(k >= 1, ErrorCode::Dimension, "project_simplex: empty vector");
  require(v.allFinite(), ErrorCode::Numeric, "project_simplex: non-finite input");
  const double tol = 4.0 * static_cast<double>(k) * std::numeric_limits<double>::epsilon();
  if (v.minCoeff() >= 0.0 && std::abs(v.sum() - 1.0) <= tol) return v;

  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, tau = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    css += u[static_cast<std::size_t>(j)];
    const double candidate = (css - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0.0) tau = candidate;
  }
  // Rounding in tau scales with |tau|; renormalising keeps the result a fixed point.
  Eigen::VectorXd p = (v.array() - tau).cwiseMax(0.0).matrix();
  return p / p.sum();
}

void project_columns_to_simplex(Eigen::MatrixXd& s) {
  for (Eigen::Index j = 0; j < s.cols(); ++j) s.col(j) = project_simplex(s.col(j));
}

Eigen::MatrixXd pgd_abundance_step(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                                   double lambda) {
  require(a.cols() == s.rows() && a.rows() == x.rows() && s.cols() == x.cols(), ErrorCode::Dimension,
          "pgd_abundance_step: shape mismatch");
  const Eigen::MatrixXd gram = a.transpose() * a;
  Eigen::MatrixXd next = s - lambda * (gram * s - a.transpose() * x);
  project_columns_to_simplex(next);
  return next;
}

Eigen::MatrixXd fclsu_init(const Eigen::MatrixXd& x, const Eigen::MatrixXd& a, int iterations) {
  require(a.rows() == x.rows(), ErrorCode::Dimension, "fclsu_init: band count mismatch");
  const Eigen::Index k = a.cols();
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(k, x.cols(), 1.0 / static_cast<double>(k));
  if (k == 1) return s;

  Eigen::MatrixXd gram = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  double top = es.eigenvalues().maxCoeff();
  if (!(top > 0.0)) return s;
  if (es.eigenvalues().minCoeff() < 1e-10 * top) {
    gram.diagonal().array() += 1e-6 * top;
    top *= 1.0 + 1e-6;
  }
  const double step = 1.0 / top;
  const Eigen::MatrixXd atx = a.transpose() * x;
  for (int it = 0; it < iterations; ++it) {
    s -= step * (gram * s - atx);
    project_columns_to_simplex(s);
  }
  return s;
}

}  // namespace dps4un
