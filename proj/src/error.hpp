#pragma once

#include <stdexcept>
#include <string>

namespace kcsm {

enum class ErrorCode {
  InvalidArgument,
  BoundaryViolation,
  UnsupportedDimension,
  Precondition,
  ResourceLimit,
  Numerical,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kcsm
