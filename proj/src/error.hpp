#pragma once

#include <stdexcept>
#include <string>

namespace mswave {

// Mirrors the status codes exposed through the C API.
enum class ErrorCode {
  InvalidArgument = 1,
  Io = 2,
  Parse = 3,
  Config = 4,
  Numeric = 5,
  NotFound = 6,
  State = 7,
  Internal = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mswave
