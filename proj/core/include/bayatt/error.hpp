#pragma once

#include <stdexcept>
#include <string>

namespace bayatt {

/// Machine-checkable failure categories. File-format problems get their own
/// codes so callers can distinguish a stale checkpoint from a corrupt one.
enum class ErrorCode {
  contract_violation,
  internal,
  io,
  bad_magic,
  version_mismatch,
  truncated_file,
  checksum_mismatch,
  count_mismatch,
  parse,
  value_out_of_range,
  divergence,
  non_finite,
  empty_pool,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

/// Precondition check; violations are caller bugs, not environmental faults.
inline void require_contract(bool cond, const std::string& what) {
  require(cond, ErrorCode::contract_violation, what);
}

}  // namespace bayatt
