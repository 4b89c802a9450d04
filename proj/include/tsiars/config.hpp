// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "json.hpp"

#include "tsiars/trainer.hpp"

namespace tsiars::config {

/// Every field, defaults included, in a nested layout:
/// top-level training keys plus "loss", "selection" and "encoder" objects.
nlohmann::json to_json(const trainer::TrainConfig& config);

/// Overlays `j` onto `base`. Unknown keys and ill-typed values raise ConfigError.
trainer::TrainConfig from_json(const nlohmann::json& j, trainer::TrainConfig base = {});

trainer::TrainConfig load_file(const std::filesystem::path& path, trainer::TrainConfig base = {});

}  // namespace tsiars::config
