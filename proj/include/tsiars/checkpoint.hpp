// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "tsiars/encoder.hpp"

namespace tsiars::checkpoint {

inline constexpr int kFormatVersion = 1;

/// Writes `<dir>/encoder.bin` (flat little-endian values in parameter order)
/// and `<dir>/encoder.json` (version, precision, config, tensor names/shapes/offsets).
template <typename T>
void save(const std::filesystem::path& dir, const encoder::EncoderParams<T>& params);

/// Reads a checkpoint directory (or its encoder.json path) and converts the
/// stored values to T.
template <typename T>
encoder::EncoderParams<T> load(const std::filesystem::path& path);

/// "f32" or "f64" as recorded in the sidecar.
std::string stored_precision(const std::filesystem::path& path);

}  // namespace tsiars::checkpoint
