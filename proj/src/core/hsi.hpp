#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dps4un {

/// Hyperspectral cube stored pixel-major: the `bands` values of one pixel are
/// contiguous, pixels are ordered row by row.
class HsiCube {
 public:
  HsiCube() = default;
  HsiCube(std::size_t height, std::size_t width, std::size_t bands, std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t bands() const noexcept { return bands_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  std::span<const float> data() const noexcept { return data_; }

  std::span<const float> pixel(std::size_t index) const {
    return std::span<const float>(data_).subspan(index * bands_, bands_);
  }

  /// C x N matrix, one column per pixel.
  Eigen::MatrixXd to_matrix() const;
  /// C x n matrix for the given pixel indices, in the given order.
  Eigen::MatrixXd gather(std::span<const std::size_t> indices) const;

  std::vector<std::string> endmember_names;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t bands_ = 0;
  std::vector<float> data_;
};

/// Global min-max normalization to [0, 1]. A constant cube maps to zeros.
HsiCube normalize(const HsiCube& cube);

HsiCube cube_from_matrix(std::size_t height, std::size_t width, const Eigen::MatrixXd& pixels);

/// C x K endmember signatures, one column per endmember.
class EndmemberMatrix {
 public:
  EndmemberMatrix() = default;
  explicit EndmemberMatrix(Eigen::MatrixXd values);

  Eigen::Index bands() const noexcept { return values_.rows(); }
  Eigen::Index count() const noexcept { return values_.cols(); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }

 private:
  Eigen::MatrixXd values_;
};

/// K x n abundance fractions; every column lies on the probability simplex.
class AbundanceMatrix {
 public:
  AbundanceMatrix() = default;
  /// Throws when a column violates nonnegativity or sum-to-one beyond `tol`.
  explicit AbundanceMatrix(Eigen::MatrixXd values, double tol = 1e-6);

  Eigen::Index count() const noexcept { return values_.rows(); }
  Eigen::Index pixels() const noexcept { return values_.cols(); }
  const Eigen::MatrixXd& values() const noexcept { return values_; }

 private:
  Eigen::MatrixXd values_;
};

bool columns_on_simplex(const Eigen::MatrixXd& s, double tol);

/// Angle in radians between two spectra, cosine clamped to [-1, 1].
double spectral_angle(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

/// Per-band Gaussian noise standard deviation.
struct NoiseModel {
  Eigen::VectorXd sigma;
};

}  // namespace dps4un
