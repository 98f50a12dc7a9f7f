#pragma once

#include <stdexcept>
#include <string>

namespace kgeformer {

enum class ErrorKind {
  shape,
  config,
  parse,
  validation,
  io,
  contract,
  divergence,
};

// All library failures derive from Error so the C API can map them to codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace kgeformer
