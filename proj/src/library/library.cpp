#include "library/library.hpp"

#include <algorithm>
#include <fstream>

#include "core/assignment.hpp"
#include "core/container.hpp"
#include "core/error.hpp"
#include "library/kmeans.hpp"
#include "library/vca.hpp"

namespace dps4un {

SpectralLibrary build_library(const HsiCube& cube, const SuperpixelMap& map, int k, std::uint64_t seed) {
  require(k >= 1, ErrorCode::InvalidArgument, "build_library: k must be >= 1");
  require(map.height == cube.height() && map.width == cube.width(), ErrorCode::Dimension,
          "build_library: superpixel map does not match the cube");
  for (int l = 0; l < map.region_count; ++l) {
    require(map.region_pixels[static_cast<std::size_t>(l)].size() >= static_cast<std::size_t>(k), ErrorCode::InvalidArgument,
            "build_library: region " + std::to_string(l) + " has fewer than k pixels");
  }

  SpectralLibrary lib;
  lib.per_region = k;
  const auto total = static_cast<Eigen::Index>(map.region_count) * k;
  lib.entries.resize(static_cast<Eigen::Index>(cube.bands()), total);
  lib.source_region.assign(static_cast<std::size_t>(total), 0);
  lib.cluster_id.assign(static_cast<std::size_t>(total), SpectralLibrary::kUnassigned);

  // Regions are independent; each gets its own seed so the result does not depend on scheduling.
#pragma omp parallel for schedule(dynamic)
  for (int l = 0; l < map.region_count; ++l) {
    const Eigen::MatrixXd px = cube.gather(map.region_pixels[static_cast<std::size_t>(l)]);
    const VcaResult r = vca(px, k, seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(l + 1)));
    for (int j = 0; j < k; ++j) {
      const Eigen::Index col = static_cast<Eigen::Index>(l) * k + j;
      lib.entries.col(col) = r.endmembers.col(j);
      lib.source_region[static_cast<std::size_t>(col)] = l;
    }
  }
  return lib;
}

SpectralLibrary assign_clusters(const SpectralLibrary& lib, int k_clusters, std::uint64_t seed) {
  require(k_clusters >= 1 && k_clusters <= lib.size(), ErrorCode::InvalidArgument,
          "assign_clusters: cluster count must be in [1, P]");
  const KMeansResult km = kmeans(lib.entries, k_clusters, seed);
  SpectralLibrary out = lib;
  out.cluster_id = km.assignment;
  out.cluster_count = k_clusters;
  out.centroids = km.centroids;
  return out;
}

std::vector<std::vector<int>> slot_conditions(const SpectralLibrary& lib, int region_count) {
  require(lib.clustered(), ErrorCode::InvalidArgument, "slot_conditions: library is not clustered");
  require(lib.cluster_count >= lib.per_region, ErrorCode::InvalidArgument,
          "slot_conditions: need at least as many clusters as endmembers per region");
  std::vector<std::vector<int>> slots(static_cast<std::size_t>(region_count));
  for (int l = 0; l < region_count; ++l) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < lib.size(); ++i) {
      if (lib.source_region[static_cast<std::size_t>(i)] == l) cols.push_back(i);
    }
    require(static_cast<int>(cols.size()) == lib.per_region, ErrorCode::InvalidArgument,
            "slot_conditions: region " + std::to_string(l) + " has no complete entry set");
    Eigen::MatrixXd cost(static_cast<Eigen::Index>(cols.size()), lib.cluster_count);
    for (std::size_t r = 0; r < cols.size(); ++r) {
      for (int c = 0; c < lib.cluster_count; ++c) {
        cost(static_cast<Eigen::Index>(r), c) = spectral_angle(lib.entries.col(cols[r]), lib.centroids.col(c));
      }
    }
    std::vector<int> ids = hungarian(cost);
    std::sort(ids.begin(), ids.end());
    slots[static_cast<std::size_t>(l)] = std::move(ids);
  }
  return slots;
}

void save_library(const SpectralLibrary& lib, const std::filesystem::path& path) {
  using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajorF rows = lib.entries.transpose().cast<float>();
  nlohmann::json h = {{"kind", "library"},
                      {"rows", lib.size()},
                      {"cols", lib.bands()},
                      {"order", "row-major"},
                      {"per_region", lib.per_region},
                      {"cluster_count", lib.cluster_count},
                      {"source_region", lib.source_region},
                      {"cluster_id", lib.cluster_id}};
  if (lib.clustered()) {
    std::vector<std::vector<double>> cents;
    for (Eigen::Index c = 0; c < lib.centroids.cols(); ++c) {
      cents.emplace_back(lib.centroids.col(c).data(), lib.centroids.col(c).data() + lib.centroids.rows());
    }
    h["centroids"] = cents;
  }
  write_container(path, std::move(h), std::span<const float>(rows.data(), static_cast<std::size_t>(rows.size())));
}

SpectralLibrary load_library(const std::filesystem::path& path) {
  Container c = read_container(path);
  const auto& h = c.header;
  if (h.value("kind", "") != "library") fail(ErrorCode::Format, "container is not a spectral library");
  SpectralLibrary lib;
  const auto p = h.at("rows").get<Eigen::Index>();
  const auto bands = h.at("cols").get<Eigen::Index>();
  using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  lib.entries = Eigen::Map<const RowMajorF>(c.payload.data(), p, bands).transpose().cast<double>();
  lib.per_region = h.at("per_region").get<int>();
  lib.cluster_count = h.at("cluster_count").get<int>();
  lib.source_region = h.at("source_region").get<std::vector<int>>();
  lib.cluster_id = h.at("cluster_id").get<std::vector<int>>();
  require(static_cast<Eigen::Index>(lib.source_region.size()) == p &&
              static_cast<Eigen::Index>(lib.cluster_id.size()) == p,
          ErrorCode::Format, "library header arrays do not match the entry count");
  if (h.contains("centroids")) {
    const auto cents = h.at("centroids").get<std::vector<std::vector<double>>>();
    lib.centroids.resize(bands, static_cast<Eigen::Index>(cents.size()));
    for (std::size_t j = 0; j < cents.size(); ++j) {
      require(static_cast<Eigen::Index>(cents[j].size()) == bands, ErrorCode::Format, "centroid length mismatch");
      lib.centroids.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(cents[j].data(), bands);
    }
  }
  return lib;
}

void write_library_csv(const SpectralLibrary& lib, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out.precision(9);
  out << "region,cluster_id";
  for (Eigen::Index b = 0; b < lib.bands(); ++b) out << ",b" << b;
  out << '\n';
  for (Eigen::Index i = 0; i < lib.size(); ++i) {
    out << lib.source_region[static_cast<std::size_t>(i)] << ',' << lib.cluster_id[static_cast<std::size_t>(i)];
    for (Eigen::Index b = 0; b < lib.bands(); ++b) out << ',' << lib.entries(b, i);
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

}  // namespace dps4un
