#pragma once

#include <stdexcept>
#include <string>

namespace fedlab {

enum class ErrorCode {
  InvalidArgument,  // bad shapes, bad ranges, empty inputs
  Config,           // infeasible or inconsistent configuration
  Format,           // malformed file contents
  Io,               // filesystem failures
  Numeric,          // non-finite values during training
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace fedlab
