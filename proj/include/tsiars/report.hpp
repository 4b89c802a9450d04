// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "tsiars/trainer.hpp"

namespace tsiars::report {

nlohmann::json to_json(const trainer::RunReport& report);

/// Header plus one row per (epoch, slot): epoch,slot,loss,delta,probability,selected,seconds.
/// Hier runs have no distribution, so delta and probability are left empty.
std::string epochs_csv(const trainer::RunReport& report);

/// Writes report.json and epochs.csv into `dir`.
void write(const std::filesystem::path& dir, const trainer::RunReport& report);

}  // namespace tsiars::report
