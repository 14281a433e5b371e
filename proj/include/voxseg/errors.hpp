#pragma once

#include <stdexcept>
#include <string>

namespace voxseg {

// Error categories map onto CLI exit codes: config=2, data=3, algorithm=4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AlgoError : std::runtime_error {
  explicit AlgoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace voxseg
