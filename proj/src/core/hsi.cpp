#include "core/hsi.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace dps4un {

HsiCube::HsiCube(std::size_t height, std::size_t width, std::size_t bands, std::vector<float> data)
    : height_(height), width_(width), bands_(bands), data_(std::move(data)) {
  require(height > 0 && width > 0 && bands > 0, ErrorCode::Dimension, "cube dimensions must be positive");
  require(data_.size() == height * width * bands, ErrorCode::Dimension,
          "cube payload has " + std::to_string(data_.size()) + " values, expected " +
              std::to_string(height * width * bands));
  for (float v : data_) require(std::isfinite(v), ErrorCode::Numeric, "cube contains non-finite values");
}

Eigen::MatrixXd HsiCube::to_matrix() const {
  Eigen::Map<const Eigen::MatrixXf> m(data_.data(), static_cast<Eigen::Index>(bands_),
                                      static_cast<Eigen::Index>(pixels()));
  return m.cast<double>();
}

Eigen::MatrixXd HsiCube::gather(std::span<const std::size_t> indices) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(bands_), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    require(indices[j] < pixels(), ErrorCode::Dimension, "pixel index out of range");
    auto px = pixel(indices[j]);
    for (std::size_t c = 0; c < bands_; ++c) out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = px[c];
  }
  return out;
}

HsiCube normalize(const HsiCube& cube) {
  auto data = cube.data();
  auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  std::vector<float> out(data.size(), 0.0f);
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (range > 0.0) {
    const double lo_d = *lo;
    std::transform(data.begin(), data.end(), out.begin(),
                   [&](float v) { return static_cast<float>((v - lo_d) / range); });
    // Pin the extremes so rounding cannot push them off [0, 1].
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i] == *lo) out[i] = 0.0f;
      if (data[i] == *hi) out[i] = 1.0f;
    }
  }
  HsiCube result(cube.height(), cube.width(), cube.bands(), std::move(out));
  result.endmember_names = cube.endmember_names;
  return result;
}

HsiCube cube_from_matrix(std::size_t height, std::size_t width, const Eigen::MatrixXd& pixels) {
  require(static_cast<std::size_t>(pixels.cols()) == height * width, ErrorCode::Dimension,
          "pixel matrix column count does not match height*width");
  std::vector<float> data(static_cast<std::size_t>(pixels.size()));
  Eigen::Map<Eigen::MatrixXf>(data.data(), pixels.rows(), pixels.cols()) = pixels.cast<float>();
  return HsiCube(height, width, static_cast<std::size_t>(pixels.rows()), std::move(data));
}

EndmemberMatrix::EndmemberMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  require(values_.allFinite(), ErrorCode::Numeric, "endmember matrix contains non-finite values");
}

bool columns_on_simplex(const Eigen::MatrixXd& s, double tol) {
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    if (s.col(j).minCoeff() < -tol) return false;
    if (std::abs(s.col(j).sum() - 1.0) > tol) return false;
  }
  return s.allFinite();
}

double spectral_angle(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double na = a.norm(), nb = b.norm();
  require(na > 0.0 && nb > 0.0, ErrorCode::Numeric, "spectral angle of a zero-norm spectrum");
  return std::acos(std::clamp(a.dot(b) / (na * nb), -1.0, 1.0));
}

AbundanceMatrix::AbundanceMatrix(Eigen::MatrixXd values, double tol) : values_(std::move(values)) {
  require(columns_on_simplex(values_, tol), ErrorCode::Numeric, "abundance columns must lie on the simplex");
}

}  // namespace dps4un
