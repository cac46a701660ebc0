#include "core/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace dps4un {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

namespace {

std::size_t expected_count(const nlohmann::json& h) {
  const std::string kind = h.value("kind", "");
  if (kind == "cube") {
    return h.at("height").get<std::size_t>() * h.at("width").get<std::size_t>() * h.at("bands").get<std::size_t>();
  }
  return h.at("rows").get<std::size_t>() * h.at("cols").get<std::size_t>();
}

}  // namespace

void write_container(const std::filesystem::path& path, nlohmann::json header, std::span<const float> payload) {
  header["dtype"] = "f32le";
  header["version"] = kContainerVersion;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  const std::string line = header.dump();
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size_bytes()));
  out.flush();
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Format, "missing header in '" + path.string() + "'");

  Container c;
  try {
    c.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, "malformed header in '" + path.string() + "': " + e.what());
  }
  if (!c.header.is_object()) fail(ErrorCode::Format, "header is not a JSON object");
  if (c.header.value("dtype", "") != "f32le") fail(ErrorCode::Format, "unsupported dtype (expected f32le)");
  if (c.header.value("version", 0) != kContainerVersion) fail(ErrorCode::Format, "unsupported container version");

  std::size_t count = 0;
  try {
    count = expected_count(c.header);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed header dimensions: ") + e.what());
  }

  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg() - start);
  if (bytes != count * sizeof(float)) {
    fail(ErrorCode::Format, "payload size mismatch in '" + path.string() + "': " + std::to_string(bytes) +
                                " bytes, expected " + std::to_string(count * sizeof(float)));
  }
  in.seekg(start);
  c.payload.resize(count);
  in.read(reinterpret_cast<char*>(c.payload.data()), static_cast<std::streamsize>(bytes));
  if (!in) fail(ErrorCode::Io, "read failed for '" + path.string() + "'");
  return c;
}

HsiCube load_cube(const std::filesystem::path& path) {
  Container c = read_container(path);
  const auto& h = c.header;
  if (h.value("kind", "") != "cube") fail(ErrorCode::Format, "container is not a cube");
  if (h.value("order", "pixel-major") != "pixel-major") fail(ErrorCode::Format, "unsupported cube order");
  for (float v : c.payload) {
    if (!std::isfinite(v)) fail(ErrorCode::Numeric, "cube payload contains non-finite values");
  }
  HsiCube cube(h.at("height").get<std::size_t>(), h.at("width").get<std::size_t>(), h.at("bands").get<std::size_t>(),
               std::move(c.payload));
  if (h.contains("endmember_names")) cube.endmember_names = h.at("endmember_names").get<std::vector<std::string>>();
  if (h.value("normalize", false)) return normalize(cube);
  return cube;
}

void save_cube(const HsiCube& cube, const std::filesystem::path& path) {
  nlohmann::json h = {{"kind", "cube"},
                      {"height", cube.height()},
                      {"width", cube.width()},
                      {"bands", cube.bands()},
                      {"order", "pixel-major"},
                      {"normalize", false}};
  if (!cube.endmember_names.empty()) h["endmember_names"] = cube.endmember_names;
  write_container(path, std::move(h), cube.data());
}

void save_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path, const std::string& kind) {
  using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajorF rm = m.cast<float>();
  nlohmann::json h = {{"kind", kind}, {"rows", m.rows()}, {"cols", m.cols()}, {"order", "row-major"}};
  write_container(path, std::move(h), std::span<const float>(rm.data(), static_cast<std::size_t>(rm.size())));
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  Container c = read_container(path);
  if (c.header.value("kind", "") == "cube") fail(ErrorCode::Format, "container holds a cube, not a matrix");
  if (c.header.value("order", "row-major") != "row-major") fail(ErrorCode::Format, "unsupported matrix order");
  const auto rows = c.header.at("rows").get<Eigen::Index>();
  const auto cols = c.header.at("cols").get<Eigen::Index>();
  using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajorF> m(c.payload.data(), rows, cols);
  return m.cast<double>();
}

}  // namespace dps4un
