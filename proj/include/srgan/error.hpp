#pragma once

#include <stdexcept>
#include <string>

namespace srgan {

// Values mirror srgan_status in srgan.h so the C boundary is a plain cast.
enum class ErrorCode : int {
  ok = 0,
  invalid_argument = 10,
  shape_mismatch = 11,
  numerical = 20,
  io = 30,
  bad_magic = 31,
  truncated = 32,
  unknown_version = 33,
  duplicate_tensor = 34,
  crc_mismatch = 35,
  spec_mismatch = 36,
  missing_tensor = 37,
  unsupported_format = 38,
  config = 40,
  usage = 41,
  conflict = 42,
  internal = 99,
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

}  // namespace srgan
