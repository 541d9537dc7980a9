#pragma once

#include <stdexcept>
#include <string>

namespace cwm {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  not_positive_definite,
  degenerate_fit,
  data_error,
  io_error,
};

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

} // namespace cwm
