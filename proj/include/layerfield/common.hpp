#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lf {

// Thrown when an input violates a documented precondition.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation produces NaN/Inf or an otherwise unusable value.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on malformed or missing files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

inline void require_numeric(bool cond, const std::string& msg) {
  if (!cond) throw NumericError(msg);
}

inline void require_io(bool cond, const std::string& msg) {
  if (!cond) throw IoError(msg);
}

}  // namespace lf
