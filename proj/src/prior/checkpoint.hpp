#pragma once

#include <filesystem>
#include <optional>

#include "prior/denoiser.hpp"

namespace dps4un {

inline constexpr int kModelFormatVersion = 1;

/// Versioned checkpoint: the container header carries the architecture, the
/// noise schedule and the tensor table; the payload is every tensor in table
/// order as row-major float32.
void save_model(const DenoiserModel& model, const std::filesystem::path& path);

/// Throws a Dimension error when `expected_bands` is given and differs.
DenoiserModel load_model(const std::filesystem::path& path, std::optional<int> expected_bands = std::nullopt);

}  // namespace dps4un
