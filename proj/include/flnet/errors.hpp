#pragma once

#include <stdexcept>
#include <string>

namespace flnet {

// Error classes map 1:1 onto CLI exit codes (see tools/flnet.cpp and README).
enum class ErrorCode : int {
  generic = 1,
  usage = 2,
  missing_file = 3,
  bad_format = 4,
  grid_mismatch = 5,
  divergence = 6,
  insufficient_overlap = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace flnet
