#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "core/hsi.hpp"
#include "segmentation/slic.hpp"

namespace dps4un {

/// Image-derived endmember bundle: K signatures per superpixel region, each
/// tagged with its source region and, once clustered, a condition id.
struct SpectralLibrary {
  static constexpr int kUnassigned = -1;

  Eigen::MatrixXd entries;  // C x P
  std::vector<int> source_region;
  std::vector<int> cluster_id;
  int cluster_count = 0;
  int per_region = 0;       // K
  Eigen::MatrixXd centroids;  // C x K_c, empty until clustered

  Eigen::Index bands() const noexcept { return entries.rows(); }
  Eigen::Index size() const noexcept { return entries.cols(); }
  bool clustered() const noexcept { return cluster_count > 0; }
};

/// Runs VCA inside every region. Every region must hold at least k pixels
/// (see merge_small_regions).
SpectralLibrary build_library(const HsiCube& cube, const SuperpixelMap& map, int k, std::uint64_t seed);

/// K-means over the raw spectra; fills cluster_id, cluster_count and centroids.
SpectralLibrary assign_clusters(const SpectralLibrary& lib, int k_clusters, std::uint64_t seed);

/// Per-region condition ids for the K sampling slots. Each region's entries
/// are matched to distinct centroids by minimum total spectral angle and the
/// resulting ids are listed in increasing order, so slot k refers to the
/// same material class in every region when K_c = K.
std::vector<std::vector<int>> slot_conditions(const SpectralLibrary& lib, int region_count);

void save_library(const SpectralLibrary& lib, const std::filesystem::path& path);
SpectralLibrary load_library(const std::filesystem::path& path);
void write_library_csv(const SpectralLibrary& lib, const std::filesystem::path& path);

}  // namespace dps4un
