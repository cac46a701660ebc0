#pragma once

#include <Eigen/Dense>

namespace dps4un {

/// Euclidean projection onto {s >= 0, sum(s) = 1} (sort-based). Vectors
/// already on the simplex to within rounding are returned unchanged.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);
void project_columns_to_simplex(Eigen::MatrixXd& s);

/// One projected-gradient step on 0.5 * ||X - A S||_F^2, column-wise:
/// S <- P(S - lambda * (A^T A S - A^T X)).
Eigen::MatrixXd pgd_abundance_step(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                                   double lambda);

/// Fully constrained least squares by projected gradient from the simplex
/// barycenter with step 1 / ||A^T A||_2. A rank-deficient A is ridge-regularized.
Eigen::MatrixXd fclsu_init(const Eigen::MatrixXd& x, const Eigen::MatrixXd& a, int iterations = 200);

}  // namespace dps4un
