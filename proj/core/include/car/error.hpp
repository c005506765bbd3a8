#pragma once
#include <stdexcept>
#include <string>

namespace car {

// Malformed input data: bad files, dangling node ids, shape mismatches.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required (losses, gradients).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace car
