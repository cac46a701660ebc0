#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dps4un {

/// Minimum-cost assignment of rows to distinct columns (rows <= cols),
/// Kuhn-Munkres with potentials. Returns the column chosen for each row.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

}  // namespace dps4un
