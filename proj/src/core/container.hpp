#pragma once

// Array container: one line of JSON header terminated by '\n', followed by
// the raw little-endian float32 payload. Cubes are pixel-major; 2-D
// matrices are stored row-major.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "core/hsi.hpp"

namespace dps4un {

inline constexpr int kContainerVersion = 1;

struct Container {
  nlohmann::json header;
  std::vector<float> payload;
};

void write_container(const std::filesystem::path& path, nlohmann::json header, std::span<const float> payload);
Container read_container(const std::filesystem::path& path);

HsiCube load_cube(const std::filesystem::path& path);
void save_cube(const HsiCube& cube, const std::filesystem::path& path);

/// `kind` is recorded in the header ("endmembers", "abundances", "labels", ...).
void save_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path, const std::string& kind = "matrix");
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

}  // namespace dps4un
