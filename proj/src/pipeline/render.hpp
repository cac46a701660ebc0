#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace dps4un {

/// 8-bit binary PGM of a row-major height x width field; values are clamped
/// to [0, 1] and mapped 0 -> black, 1 -> white.
void write_gray_pgm(const Eigen::VectorXd& values, std::size_t height, std::size_t width,
                    const std::filesystem::path& path);

/// One PGM per abundance row, named <prefix>_<k>.pgm (k from 0).
std::vector<std::filesystem::path> render_abundance_maps(const Eigen::MatrixXd& abundances, std::size_t height,
                                                         std::size_t width, const std::filesystem::path& dir,
                                                         const std::string& prefix = "abundance");

struct TrajectoryPoint {
  int step = 0;
  int timestep = 0;
  int region = 0;
  int slot = 0;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

std::vector<TrajectoryPoint> read_trajectory_csv(const std::filesystem::path& path);

/// Writes trajectory_density.pgm (log-scaled 2-D histogram of the PCA
/// coordinates, `bins` x `bins`) and trajectory_scatter.svg (one polyline per
/// region and slot). Returns the written paths.
std::vector<std::filesystem::path> render_trajectory(const std::vector<TrajectoryPoint>& points,
                                                     const std::filesystem::path& dir, int bins = 128);

}  // namespace dps4un
