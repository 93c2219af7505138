// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>

namespace presize {

/// Invalid configuration value (bad vocab size, dims, flag combinations).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file (dataset rows, vocab files, checkpoints).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failure (missing path, short read, failed write).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace presize
