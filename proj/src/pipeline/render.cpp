#include "pipeline/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "core/error.hpp"

namespace dps4un {

void write_gray_pgm(const Eigen::VectorXd& values, std::size_t height, std::size_t width,
                    const std::filesystem::path& path) {
  require(static_cast<std::size_t>(values.size()) == height * width && height > 0 && width > 0,
          ErrorCode::Dimension, "write_gray_pgm: value count does not match the image size");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  std::string row(values.size(), '\0');
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values(i)) ? std::clamp(values(i), 0.0, 1.0) : 0.0;
    row[static_cast<std::size_t>(i)] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(row.data(), static_cast<std::streamsize>(row.size()));
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

std::vector<std::filesystem::path> render_abundance_maps(const Eigen::MatrixXd& abundances, std::size_t height,
                                                         std::size_t width, const std::filesystem::path& dir,
                                                         const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (Eigen::Index k = 0; k < abundances.rows(); ++k) {
    auto p = dir / (prefix + "_" + std::to_string(k) + ".pgm");
    write_gray_pgm(abundances.row(k).transpose(), height, width, p);
    paths.push_back(std::move(p));
  }
  return paths;
}

std::vector<TrajectoryPoint> read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,timestep,region,slot,pc1,pc2", 0) != 0) {
    fail(ErrorCode::Format, "'" + path.string() + "' is not a trajectory CSV");
  }
  std::vector<TrajectoryPoint> points;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    TrajectoryPoint p;
    if (!(fields >> p.step >> p.timestep >> p.region >> p.slot >> p.pc1 >> p.pc2)) {
      fail(ErrorCode::Format, "malformed trajectory row at line " + std::to_string(lineno));
    }
    points.push_back(p);
  }
  return points;
}

std::vector<std::filesystem::path> render_trajectory(const std::vector<TrajectoryPoint>& points,
                                                     const std::filesystem::path& dir, int bins) {
  require(bins >= 2, ErrorCode::InvalidArgument, "render_trajectory: bins must be at least 2");
  require(!points.empty(), ErrorCode::InvalidArgument, "render_trajectory: empty trajectory");
  std::filesystem::create_directories(dir);

  double x0 = points[0].pc1, x1 = x0, y0 = points[0].pc2, y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.pc1);
    x1 = std::max(x1, p.pc1);
    y0 = std::min(y0, p.pc2);
    y1 = std::max(y1, p.pc2);
  }
  const double sx = x1 > x0 ? x1 - x0 : 1.0;
  const double sy = y1 > y0 ? y1 - y0 : 1.0;
  auto to_bin = [bins](double v, double lo, double span) {
    return std::clamp(static_cast<int>((v - lo) / span * bins), 0, bins - 1);
  };

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bins) * bins);
  for (const auto& p : points) {
    const int bx = to_bin(p.pc1, x0, sx);
    const int by = bins - 1 - to_bin(p.pc2, y0, sy);  // y axis points up
    counts(static_cast<Eigen::Index>(by) * bins + bx) += 1.0;
  }
  const double peak = std::log1p(counts.maxCoeff());
  Eigen::VectorXd density = counts.unaryExpr([peak](double c) { return std::log1p(c) / peak; });
  std::vector<std::filesystem::path> paths;
  paths.push_back(dir / "trajectory_density.pgm");
  write_gray_pgm(density, static_cast<std::size_t>(bins), static_cast<std::size_t>(bins), paths.back());

  std::map<std::pair<int, int>, std::vector<const TrajectoryPoint*>> tracks;
  for (const auto& p : points) tracks[{p.region, p.slot}].push_back(&p);
  constexpr double kSize = 512.0, kPad = 16.0;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  paths.push_back(dir / "trajectory_scatter.svg");
  std::ofstream svg(paths.back(), std::ios::trunc);
  if (!svg) fail(ErrorCode::Io, "cannot open '" + paths.back().string() + "' for writing");
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto px = [&](double v) { return kPad + (v - x0) / sx * (kSize - 2 * kPad); };
  auto py = [&](double v) { return kSize - kPad - (v - y0) / sy * (kSize - 2 * kPad); };
  for (const auto& [key, track] : tracks) {
    const char* colour = palette[static_cast<std::size_t>(key.second) % std::size(palette)];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-opacity=\"0.35\" points=\"";
    for (const auto* p : track) svg << px(p->pc1) << ',' << py(p->pc2) << ' ';
    svg << "\"/>\n";
    const auto* last = track.back();
    svg << "<circle cx=\"" << px(last->pc1) << "\" cy=\"" << py(last->pc2) << "\" r=\"3\" fill=\"" << colour
        << "\"/>\n";
  }
  svg << "</svg>\n";
  if (!svg) fail(ErrorCode::Io, "write failed for '" + paths.back().string() + "'");
  return paths;
}

}  // namespace dps4un
