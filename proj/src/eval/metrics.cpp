#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "core/assignment.hpp"
#include "core/error.hpp"
#include "core/hsi.hpp"

namespace dps4un {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Eigen::MatrixXd sad_cost(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref) {
  Eigen::MatrixXd cost(est.cols(), ref.cols());
  for (Eigen::Index i = 0; i < est.cols(); ++i) {
    for (Eigen::Index j = 0; j < ref.cols(); ++j) cost(i, j) = spectral_angle(est.col(i), ref.col(j));
  }
  return cost;
}

}  // namespace

MetricValues rmse(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref) {
  require(est.rows() == ref.rows() && est.cols() == ref.cols() && est.size() > 0, ErrorCode::Dimension,
          "rmse: shape mismatch");
  MetricValues out;
  for (Eigen::Index k = 0; k < est.rows(); ++k) {
    out.per_endmember.push_back(std::sqrt((est.row(k) - ref.row(k)).squaredNorm() / static_cast<double>(est.cols())));
  }
  out.mean = mean_of(out.per_endmember);
  return out;
}

MetricValues sad(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref) {
  require(est.rows() == ref.rows() && est.cols() == ref.cols() && est.size() > 0, ErrorCode::Dimension,
          "sad: shape mismatch");
  MetricValues out;
  for (Eigen::Index k = 0; k < est.cols(); ++k) out.per_endmember.push_back(spectral_angle(est.col(k), ref.col(k)));
  out.mean = mean_of(out.per_endmember);
  return out;
}

std::vector<int> match_endmembers(const Eigen::MatrixXd& est, const Eigen::MatrixXd& ref) {
  require(est.rows() == ref.rows() && est.cols() == ref.cols() && est.cols() > 0, ErrorCode::Dimension,
          "match_endmembers: shape mismatch");
  const Eigen::MatrixXd cost = sad_cost(est, ref);
  const int k = static_cast<int>(est.cols());
  if (k > 8) return hungarian(cost);

  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < k; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Eigen::MatrixXd align_columns(const Eigen::MatrixXd& est, const std::vector<int>& matching) {
  require(static_cast<Eigen::Index>(matching.size()) == est.cols(), ErrorCode::Dimension,
          "align_columns: matching size mismatch");
  Eigen::MatrixXd out(est.rows(), est.cols());
  for (std::size_t k = 0; k < matching.size(); ++k) out.col(matching[k]) = est.col(static_cast<Eigen::Index>(k));
  return out;
}

Eigen::MatrixXd align_rows(const Eigen::MatrixXd& est, const std::vector<int>& matching) {
  return align_columns(est.transpose(), matching).transpose();
}

EvalReport evaluate(const Eigen::MatrixXd& est_endmembers, const Eigen::MatrixXd& est_abundances,
                    const Eigen::MatrixXd& ref_endmembers, const Eigen::MatrixXd& ref_abundances,
                    std::vector<std::string> names) {
  EvalReport r;
  r.matching = match_endmembers(est_endmembers, ref_endmembers);
  const MetricValues s = sad(align_columns(est_endmembers, r.matching), ref_endmembers);
  r.per_endmember_sad = s.per_endmember;
  r.asad = s.mean;
  if (est_abundances.size() > 0 && ref_abundances.size() > 0) {
    const MetricValues m = rmse(align_rows(est_abundances, r.matching), ref_abundances);
    r.per_endmember_rmse = m.per_endmember;
    r.armse = m.mean;
  }
  if (!names.empty()) {
    require(static_cast<Eigen::Index>(names.size()) == ref_endmembers.cols(), ErrorCode::Dimension,
            "evaluate: one name per reference endmember required");
  }
  r.names = std::move(names);
  return r;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j = {{"per_endmember_sad", report.per_endmember_sad},
                      {"asad", report.asad},
                      {"matching", report.matching}};
  if (!report.per_endmember_rmse.empty()) {
    j["per_endmember_rmse"] = report.per_endmember_rmse;
    j["armse"] = report.armse;
  }
  if (!report.names.empty()) j["names"] = report.names;
  return j;
}

std::string format_report_table(const EvalReport& report) {
  const bool with_rmse = !report.per_endmember_rmse.empty();
  std::ostringstream out;
  out << std::left << std::setw(14) << "endmember";
  if (with_rmse) out << std::right << std::setw(10) << "RMSE";
  out << std::right << std::setw(10) << "SAD" << '\n';
  out << std::fixed << std::setprecision(4);
  for (std::size_t k = 0; k < report.per_endmember_sad.size(); ++k) {
    const std::string name = k < report.names.size() ? report.names[k] : "#" + std::to_string(k + 1);
    out << std::left << std::setw(14) << name;
    if (with_rmse) out << std::right << std::setw(10) << report.per_endmember_rmse[k];
    out << std::right << std::setw(10) << report.per_endmember_sad[k] << '\n';
  }
  out << std::left << std::setw(14) << "mean";
  if (with_rmse) out << std::right << std::setw(10) << report.armse;
  out << std::right << std::setw(10) << report.asad << '\n';
  return out.str();
}

}  // namespace dps4un
