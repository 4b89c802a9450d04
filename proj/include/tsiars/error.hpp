// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tsiars {

/// Malformed or unreadable input data (files, parsed records, label spaces).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss, gradient or parameter became non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace tsiars
