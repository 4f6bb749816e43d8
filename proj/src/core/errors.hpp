#pragma once

#include <stdexcept>
#include <string>

namespace seqnav {

// Error categories surfaced through the C API status codes and CLI exit
// codes: config/usage problems, file problems, missing entities, and
// numeric failures during training.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

struct NotFoundError : std::runtime_error {
  explicit NotFoundError(const std::string& m) : std::runtime_error(m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace seqnav
