#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace dps4un {

struct MetricValues {
  std::vector<double> per_endmember;
  double mean = 0.0;
};

/// Per-endmember abundance RMSE over pixels (rows of K x N inputs) and their mean.
MetricValues rmse(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref);

/// Per-column spectral angle in radians and the mean.
MetricValues sad(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref);

/// matching[k] is the reference column paired with estimated column k; the
/// pairing minimises the total SAD. Ties go to the lexicographically
/// smallest permutation for K <= 8.
std::vector<int> match_endmembers(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref);

/// Reorders estimated columns (or abundance rows) into reference order.
Eigen::MatrixXd align_columns(const Eigen::MatrixXd& est, const std::vector<int>& matching);
Eigen::MatrixXd align_rows(const Eigen::MatrixXd& est, const std::vector<int>& matching);

struct EvalReport {
  std::vector<double> per_endmember_rmse;
  double armse = 0.0;
  std::vector<double> per_endmember_sad;
  double asad = 0.0;
  std::vector<int> matching;
  std::vector<std::string> names;  // reference order; may be empty
};

/// Matches endmembers by SAD, aligns abundances with the same permutation
/// and scores both. Either abundance argument may be empty to skip RMSE.
EvalReport evaluate(const Eigen::MatrixXd& est_endmembers, const Eigen::MatrixXd& est_abundances,
                    const Eigen::MatrixXd& ref_endmembers, const Eigen::MatrixXd& ref_abundances,
                    std::vector<std::string> names = {});

nlohmann::json report_to_json(const EvalReport& report);
/// Rows per endmember plus a mean row; columns RMSE and SAD.
std::string format_report_table(const EvalReport& report);

}  // namespace dps4un
