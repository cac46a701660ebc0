#include "prior/checkpoint.hpp"

#include "core/container.hpp"
#include "core/error.hpp"

namespace dps4un {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void save_model(const DenoiserModel& model, const std::filesystem::path& path) {
  const auto& cfg = model.config();
  const auto& sched = model.schedule();
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<float> payload;
  payload.reserve(model.parameter_count());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params()[i];
    tensors.push_back({{"name", model.param_names()[i]}, {"rows", p.rows()}, {"cols", p.cols()}});
    RowMajorF rm = p.cast<float>();
    payload.insert(payload.end(), rm.data(), rm.data() + rm.size());
  }
  nlohmann::json h = {{"kind", "model"},
                      {"format_version", kModelFormatVersion},
                      {"architecture",
                       {{"bands", cfg.bands},
                        {"clusters", cfg.clusters},
                        {"stages", cfg.stages},
                        {"hidden", cfg.hidden},
                        {"time_dim", cfg.time_dim},
                        {"label_dim", cfg.label_dim},
                        {"prediction", "epsilon"}}},
                      {"schedule", {{"steps", sched.steps}, {"beta_start", sched.beta_start}, {"beta_end", sched.beta_end}}},
                      {"tensors", tensors},
                      {"rows", payload.size()},
                      {"cols", 1}};
  write_container(path, std::move(h), payload);
}

DenoiserModel load_model(const std::filesystem::path& path, std::optional<int> expected_bands) {
  Container c = read_container(path);
  const auto& h = c.header;
  if (h.value("kind", "") != "model") fail(ErrorCode::Format, "container is not a model checkpoint");
  if (h.value("format_version", 0) != kModelFormatVersion) {
    fail(ErrorCode::Format, "model checkpoint version " + std::to_string(h.value("format_version", 0)) +
                                " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  DenoiserModel model;
  try {
    const auto& a = h.at("architecture");
    DenoiserConfig cfg;
    cfg.bands = a.at("bands").get<int>();
    cfg.clusters = a.at("clusters").get<int>();
    cfg.stages = a.at("stages").get<int>();
    cfg.hidden = a.at("hidden").get<int>();
    cfg.time_dim = a.at("time_dim").get<int>();
    cfg.label_dim = a.at("label_dim").get<int>();
    const auto& s = h.at("schedule");
    NoiseSchedule sched =
        make_schedule(s.at("steps").get<int>(), s.at("beta_start").get<double>(), s.at("beta_end").get<double>());
    model = DenoiserModel(cfg, std::move(sched), 0);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed model header: ") + e.what());
  }
  if (expected_bands && *expected_bands != model.config().bands) {
    fail(ErrorCode::Dimension, "model was trained on " + std::to_string(model.config().bands) + " bands, data has " +
                                   std::to_string(*expected_bands));
  }

  const auto& tensors = h.at("tensors");
  auto& params = model.params();
  if (tensors.size() != params.size()) fail(ErrorCode::Format, "checkpoint tensor table does not match architecture");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto rows = tensors[i].at("rows").get<Eigen::Index>();
    const auto cols = tensors[i].at("cols").get<Eigen::Index>();
    if (rows != params[i].rows() || cols != params[i].cols() ||
        tensors[i].at("name").get<std::string>() != model.param_names()[i]) {
      fail(ErrorCode::Format, "checkpoint tensor '" + model.param_names()[i] + "' has the wrong shape");
    }
    const auto n = static_cast<std::size_t>(rows * cols);
    if (offset + n > c.payload.size()) fail(ErrorCode::Format, "checkpoint payload is truncated");
    params[i] = Eigen::Map<const RowMajorF>(c.payload.data() + offset, rows, cols).cast<double>();
    offset += n;
  }
  if (offset != c.payload.size()) fail(ErrorCode::Format, "checkpoint payload has trailing data");
  for (const auto& p : params) {
    if (!p.allFinite()) fail(ErrorCode::Numeric, "checkpoint contains non-finite parameters");
  }
  return model;
}

}  // namespace dps4un
