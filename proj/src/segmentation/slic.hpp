#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/hsi.hpp"

namespace dps4un {

/// Pixel -> region labelling. `labels` is row-major over the image; labels are
/// compact in [0, region_count) and `region_pixels` lists the members of each
/// region in increasing pixel order.
struct SuperpixelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<int> labels;
  int region_count = 0;
  std::vector<std::vector<std::size_t>> region_pixels;

  /// Builds a map from arbitrary non-negative labels. Unused label values are
  /// dropped and the rest renumbered preserving their relative order.
  static SuperpixelMap from_labels(std::size_t height, std::size_t width, std::vector<int> labels);
};

struct SlicParams {
  int target_regions = 16;
  double compactness = 10.0;
  int iterations = 10;
  std::uint64_t seed = 0;
  /// Square the spectral distance inside the root instead of using it as is.
  bool squared_spectral = false;
  bool enforce_connectivity = true;
};

struct SlicCenter {
  double x = 0.0;
  double y = 0.0;
  Eigen::VectorXd spectrum;
};

/// Diagnostics from one segmentation run. `costs` holds the total assignment
/// cost (sum of squared SLIC distances) after every assignment and every
/// center update, in order.
struct SlicTrace {
  std::vector<double> costs;
  std::vector<SlicCenter> centers;
  std::vector<int> raw_labels;
  double grid_interval = 0.0;
};

/// Squared SLIC distance between a pixel and a center.
double slic_distance_sq(double dx, double dy, double spectral_norm, double grid_interval, double compactness,
                        bool squared_spectral);

SuperpixelMap slic_segment(const HsiCube& cube, const SlicParams& params, SlicTrace* trace = nullptr);

/// Makes every region 4-connected. Disconnected fragments smaller than
/// (N / L) / 4 are absorbed by the largest adjacent region; larger fragments
/// become regions of their own.
SuperpixelMap enforce_connectivity(const SuperpixelMap& map);

/// Merges regions with fewer than `min_pixels` members into their largest
/// neighbouring region, smallest first.
SuperpixelMap merge_small_regions(const SuperpixelMap& map, std::size_t min_pixels);

bool regions_connected(const SuperpixelMap& map);

void write_labels_pgm16(const SuperpixelMap& map, const std::filesystem::path& path);
void write_labels_csv(const SuperpixelMap& map, const std::filesystem::path& path);
void save_labels(const SuperpixelMap& map, const std::filesystem::path& path);
SuperpixelMap load_labels(const std::filesystem::path& path);

}  // namespace dps4un
