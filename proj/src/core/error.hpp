#pragma once

#include <stdexcept>
#include <string>

namespace dps4un {

enum class ErrorCode {
  InvalidArgument = 1,
  Io = 2,
  Format = 3,
  Dimension = 4,
  Numeric = 5,
  Internal = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace dps4un
