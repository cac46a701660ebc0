#include "segmentation/slic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "core/container.hpp"
#include "core/error.hpp"

namespace dps4un {

namespace {

struct Components {
  std::vector<int> id;                       // per pixel component index
  std::vector<std::size_t> size;             // per component
  std::vector<int> label;                    // per component source label
  std::vector<std::size_t> first_pixel;      // per component
};

Components find_components(std::size_t h, std::size_t w, const std::vector<int>& labels) {
  Components c;
  c.id.assign(h * w, -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (c.id[start] >= 0) continue;
    const int comp = static_cast<int>(c.size.size());
    const int lab = labels[start];
    std::size_t count = 0;
    stack.push_back(start);
    c.id[start] = comp;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++count;
      const std::size_t y = p / w, x = p % w;
      auto visit = [&](std::size_t q) {
        if (c.id[q] < 0 && labels[q] == lab) {
          c.id[q] = comp;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    c.size.push_back(count);
    c.label.push_back(lab);
    c.first_pixel.push_back(start);
  }
  return c;
}

// Labels of the regions 4-adjacent to the pixels of component `comp`.
std::vector<int> adjacent_labels(std::size_t h, std::size_t w, const std::vector<int>& labels, const Components& c,
                                 int comp) {
  std::vector<int> out;
  for (std::size_t p = 0; p < h * w; ++p) {
    if (c.id[p] != comp) continue;
    const std::size_t y = p / w, x = p % w;
    auto check = [&](std::size_t q) {
      if (c.id[q] != comp) out.push_back(labels[q]);
    };
    if (x > 0) check(p - 1);
    if (x + 1 < w) check(p + 1);
    if (y > 0) check(p - w);
    if (y + 1 < h) check(p + w);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::map<int, std::size_t> label_sizes(const std::vector<int>& labels) {
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  return sizes;
}

// Largest adjacent region by total pixel count; ties go to the lower label.
int largest_neighbour(const std::vector<int>& neighbours, const std::map<int, std::size_t>& sizes) {
  int best = -1;
  std::size_t best_size = 0;
  for (int l : neighbours) {
    const std::size_t s = sizes.at(l);
    if (best < 0 || s > best_size) {
      best = l;
      best_size = s;
    }
  }
  return best;
}

}  // namespace

SuperpixelMap SuperpixelMap::from_labels(std::size_t height, std::size_t width, std::vector<int> labels) {
  require(labels.size() == height * width, ErrorCode::Dimension, "label count does not match image size");
  std::vector<int> used;
  for (int l : labels) {
    require(l >= 0, ErrorCode::InvalidArgument, "labels must be non-negative");
    used.push_back(l);
  }
  std::sort(used.begin(), used.end());
  used.erase(std::unique(used.begin(), used.end()), used.end());

  SuperpixelMap map;
  map.height = height;
  map.width = width;
  map.region_count = static_cast<int>(used.size());
  map.region_pixels.resize(used.size());
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const int compact = static_cast<int>(std::lower_bound(used.begin(), used.end(), labels[p]) - used.begin());
    labels[p] = compact;
    map.region_pixels[static_cast<std::size_t>(compact)].push_back(p);
  }
  map.labels = std::move(labels);
  return map;
}

double slic_distance_sq(double dx, double dy, double spectral_norm, double grid_interval, double compactness,
                        bool squared_spectral) {
  const double spatial = (dx * dx + dy * dy) / (grid_interval * grid_interval);
  const double spectral = squared_spectral ? spectral_norm * spectral_norm : spectral_norm;
  return spatial + spectral / (compactness * compactness);
}

SuperpixelMap slic_segment(const HsiCube& cube, const SlicParams& params, SlicTrace* trace) {
  const std::size_t h = cube.height(), w = cube.width(), n = cube.pixels();
  const auto bands = static_cast<Eigen::Index>(cube.bands());
  require(params.target_regions >= 1, ErrorCode::InvalidArgument, "target region count must be >= 1");
  require(static_cast<std::size_t>(params.target_regions) <= n, ErrorCode::InvalidArgument,
          "target region count exceeds pixel count");
  require(params.compactness > 0.0, ErrorCode::InvalidArgument, "compactness must be positive");
  require(params.iterations >= 0, ErrorCode::InvalidArgument, "iteration count must be non-negative");

  const Eigen::MatrixXd pixels = cube.to_matrix();
  const double e = std::sqrt(static_cast<double>(n) / params.target_regions);
  const double m = params.compactness;
  const bool sq = params.squared_spectral;

  auto gradient = [&](std::size_t x, std::size_t y) {
    const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < w ? x + 1 : x;
    const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < h ? y + 1 : y;
    return (pixels.col(static_cast<Eigen::Index>(y * w + xr)) - pixels.col(static_cast<Eigen::Index>(y * w + xl)))
               .squaredNorm() +
           (pixels.col(static_cast<Eigen::Index>(yd * w + x)) - pixels.col(static_cast<Eigen::Index>(yu * w + x)))
               .squaredNorm();
  };

  // Grid seeds: ny rows by nx columns chosen to match the image aspect ratio.
  const double target = params.target_regions;
  const int ny = std::max(1, static_cast<int>(std::lround(std::sqrt(target * static_cast<double>(h) / w))));
  const int nx = std::max(1, static_cast<int>(std::lround(target / ny)));
  std::vector<SlicCenter> centers;
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      double cx = (gx + 0.5) * static_cast<double>(w) / nx - 0.5;
      double cy = (gy + 0.5) * static_cast<double>(h) / ny - 0.5;
      auto px = static_cast<std::size_t>(std::clamp<long>(std::lround(cx), 0, static_cast<long>(w) - 1));
      auto py = static_cast<std::size_t>(std::clamp<long>(std::lround(cy), 0, static_cast<long>(h) - 1));
      double best = gradient(px, py);
      std::size_t bx = px, by = py;
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          const long qx = static_cast<long>(px) + dx, qy = static_cast<long>(py) + dy;
          if (qx < 0 || qy < 0 || qx >= static_cast<long>(w) || qy >= static_cast<long>(h)) continue;
          const double g = gradient(static_cast<std::size_t>(qx), static_cast<std::size_t>(qy));
          if (g < best) {
            best = g;
            bx = static_cast<std::size_t>(qx);
            by = static_cast<std::size_t>(qy);
          }
        }
      }
      if (bx != px || by != py) {
        cx = static_cast<double>(bx);
        cy = static_cast<double>(by);
      }
      centers.push_back({cx, cy, pixels.col(static_cast<Eigen::Index>(by * w + bx))});
    }
  }
  const std::size_t k = centers.size();

  auto distance_sq = [&](std::size_t p, const SlicCenter& c) {
    const double dx = static_cast<double>(p % w) - c.x;
    const double dy = static_cast<double>(p / w) - c.y;
    return slic_distance_sq(dx, dy, (pixels.col(static_cast<Eigen::Index>(p)) - c.spectrum).norm(), e, m, sq);
  };

  std::vector<int> labels(n, -1);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  auto total_cost = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += distance_sq(p, centers[static_cast<std::size_t>(labels[p])]);
    return s;
  };

  for (int it = 0;; ++it) {
    // Assignment: a pixel keeps its current center unless a windowed candidate is strictly closer.
    for (std::size_t p = 0; p < n; ++p) {
      dist[p] = labels[p] >= 0 ? distance_sq(p, centers[static_cast<std::size_t>(labels[p])])
                               : std::numeric_limits<double>::infinity();
    }
    for (std::size_t c = 0; c < k; ++c) {
      const long x0 = std::max<long>(0, static_cast<long>(std::floor(centers[c].x - e)));
      const long x1 = std::min<long>(static_cast<long>(w) - 1, static_cast<long>(std::ceil(centers[c].x + e)));
      const long y0 = std::max<long>(0, static_cast<long>(std::floor(centers[c].y - e)));
      const long y1 = std::min<long>(static_cast<long>(h) - 1, static_cast<long>(std::ceil(centers[c].y + e)));
      for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
          const auto p = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
          const double d = distance_sq(p, centers[c]);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<int>(c);
          }
        }
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (labels[p] >= 0) continue;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = distance_sq(p, centers[c]);
        if (d < dist[p]) {
          dist[p] = d;
          labels[p] = static_cast<int>(c);
        }
      }
    }
    if (trace) trace->costs.push_back(total_cost());
    if (it >= params.iterations) break;

    // Update: spatial mean; spectral mean when squared, otherwise a
    // Weiszfeld step toward the geometric median accepted only if it helps.
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t p = 0; p < n; ++p) members[static_cast<std::size_t>(labels[p])].push_back(p);
    for (std::size_t c = 0; c < k; ++c) {
      const auto& mem = members[c];
      if (mem.empty()) continue;
      double sx = 0.0, sy = 0.0;
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(bands);
      for (std::size_t p : mem) {
        sx += static_cast<double>(p % w);
        sy += static_cast<double>(p / w);
        mean += pixels.col(static_cast<Eigen::Index>(p));
      }
      centers[c].x = sx / static_cast<double>(mem.size());
      centers[c].y = sy / static_cast<double>(mem.size());
      mean /= static_cast<double>(mem.size());
      if (sq) {
        centers[c].spectrum = mean;
        continue;
      }
      auto spectral_cost = [&](const Eigen::VectorXd& v) {
        double s = 0.0;
        for (std::size_t p : mem) s += (pixels.col(static_cast<Eigen::Index>(p)) - v).norm();
        return s;
      };
      Eigen::VectorXd current = centers[c].spectrum;
      double current_cost = spectral_cost(current);
      const double mean_cost = spectral_cost(mean);
      if (mean_cost < current_cost) {
        current = mean;
        current_cost = mean_cost;
      }
      for (int wi = 0; wi < 5; ++wi) {
        Eigen::VectorXd num = Eigen::VectorXd::Zero(bands);
        double den = 0.0;
        for (std::size_t p : mem) {
          const double d = std::max((pixels.col(static_cast<Eigen::Index>(p)) - current).norm(), 1e-12);
          num += pixels.col(static_cast<Eigen::Index>(p)) / d;
          den += 1.0 / d;
        }
        Eigen::VectorXd next = num / den;
        const double next_cost = spectral_cost(next);
        if (!(next_cost < current_cost)) break;
        current = std::move(next);
        current_cost = next_cost;
      }
      centers[c].spectrum = std::move(current);
    }
    if (trace) trace->costs.push_back(total_cost());
  }

  if (trace) {
    trace->centers = centers;
    trace->raw_labels = labels;
    trace->grid_interval = e;
  }
  SuperpixelMap map = SuperpixelMap::from_labels(h, w, std::move(labels));
  if (params.enforce_connectivity) map = enforce_connectivity(map);
  return map;
}

SuperpixelMap enforce_connectivity(const SuperpixelMap& map) {
  const std::size_t h = map.height, w = map.width, n = h * w;
  if (n == 0) return map;
  const double min_size = static_cast<double>(n) / std::max(1, map.region_count) / 4.0;
  std::vector<int> labels = map.labels;

  for (;;) {
    Components comps = find_components(h, w, labels);
    // Main component per label: the largest, ties to the earliest.
    std::map<int, int> main_comp;
    for (int c = 0; c < static_cast<int>(comps.size.size()); ++c) {
      auto it = main_comp.find(comps.label[c]);
      if (it == main_comp.end() || comps.size[c] > comps.size[static_cast<std::size_t>(it->second)]) {
        main_comp[comps.label[c]] = c;
      }
    }
    int orphan = -1;
    for (int c = 0; c < static_cast<int>(comps.size.size()); ++c) {
      if (main_comp[comps.label[c]] == c) continue;
      if (static_cast<double>(comps.size[c]) >= min_size) continue;
      if (orphan < 0 || comps.size[c] < comps.size[static_cast<std::size_t>(orphan)]) orphan = c;
    }
    if (orphan < 0) {
      // Remaining secondary fragments are large enough to stand alone.
      int next_label = *std::max_element(labels.begin(), labels.end()) + 1;
      for (int c = 0; c < static_cast<int>(comps.size.size()); ++c) {
        if (main_comp[comps.label[c]] == c) continue;
        for (std::size_t p = 0; p < n; ++p) {
          if (comps.id[p] == c) labels[p] = next_label;
        }
        ++next_label;
      }
      break;
    }
    const auto neighbours = adjacent_labels(h, w, labels, comps, orphan);
    const int target = largest_neighbour(neighbours, label_sizes(labels));
    if (target < 0) break;
    for (std::size_t p = 0; p < n; ++p) {
      if (comps.id[p] == orphan) labels[p] = target;
    }
  }
  return SuperpixelMap::from_labels(h, w, std::move(labels));
}

SuperpixelMap merge_small_regions(const SuperpixelMap& map, std::size_t min_pixels) {
  const std::size_t h = map.height, w = map.width;
  std::vector<int> labels = map.labels;
  for (;;) {
    const auto sizes = label_sizes(labels);
    if (sizes.size() <= 1) break;
    int smallest = -1;
    for (const auto& [lab, size] : sizes) {
      if (size >= min_pixels) continue;
      if (smallest < 0 || size < sizes.at(smallest)) smallest = lab;
    }
    if (smallest < 0) break;
    // Use the region's largest component to find neighbours.
    Components comps = find_components(h, w, labels);
    int comp = -1;
    for (int c = 0; c < static_cast<int>(comps.size.size()); ++c) {
      if (comps.label[c] == smallest && (comp < 0 || comps.size[c] > comps.size[static_cast<std::size_t>(comp)])) {
        comp = c;
      }
    }
    const int target = largest_neighbour(adjacent_labels(h, w, labels, comps, comp), sizes);
    if (target < 0) break;
    std::replace(labels.begin(), labels.end(), smallest, target);
  }
  return SuperpixelMap::from_labels(h, w, std::move(labels));
}

bool regions_connected(const SuperpixelMap& map) {
  Components comps = find_components(map.height, map.width, map.labels);
  return static_cast<int>(comps.size.size()) == map.region_count;
}

void write_labels_pgm16(const SuperpixelMap& map, const std::filesystem::path& path) {
  require(map.region_count <= 65536, ErrorCode::InvalidArgument, "too many regions for a 16-bit PGM");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << "P5\n" << map.width << ' ' << map.height << "\n65535\n";
  for (int l : map.labels) {
    const auto v = static_cast<std::uint16_t>(l);
    out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void write_labels_csv(const SuperpixelMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  for (std::size_t y = 0; y < map.height; ++y) {
    for (std::size_t x = 0; x < map.width; ++x) {
      if (x) out << ',';
      out << map.labels[y * map.width + x];
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

void save_labels(const SuperpixelMap& map, const std::filesystem::path& path) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(map.height), static_cast<Eigen::Index>(map.width));
  for (std::size_t p = 0; p < map.labels.size(); ++p) {
    m(static_cast<Eigen::Index>(p / map.width), static_cast<Eigen::Index>(p % map.width)) = map.labels[p];
  }
  save_matrix(m, path, "labels");
}

SuperpixelMap load_labels(const std::filesystem::path& path) {
  const Eigen::MatrixXd m = load_matrix(path);
  std::vector<int> labels(static_cast<std::size_t>(m.size()));
  for (Eigen::Index y = 0; y < m.rows(); ++y) {
    for (Eigen::Index x = 0; x < m.cols(); ++x) {
      const double v = m(y, x);
      require(v >= 0 && v == std::floor(v), ErrorCode::Format, "label container holds non-integer labels");
      labels[static_cast<std::size_t>(y * m.cols() + x)] = static_cast<int>(v);
    }
  }
  return SuperpixelMap::from_labels(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                                    std::move(labels));
}

}  // namespace dps4un
