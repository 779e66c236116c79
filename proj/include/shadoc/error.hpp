#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shadoc {

/// Base of every error thrown by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image extents do not satisfy an operation's shape contract.
class dimension_error : public error {
 public:
  using error::error;
};

/// Invalid hyperparameter, option or configuration key.
class config_error : public error {
 public:
  using error::error;
};

/// Object used in a state that forbids the call (e.g. backward on a consumed tape).
class state_error : public error {
 public:
  using error::error;
};

/// Caller broke an API precondition that is not about shapes.
class contract_error : public error {
 public:
  using error::error;
};

/// A non-finite value was produced.
class numeric_error : public error {
 public:
  using error::error;
};

/// Well-formed bytes that describe something we do not handle.
class unsupported_format_error : public error {
 public:
  using error::error;
};

/// Bad magic, version or tag in a file this library owns.
class format_error : public error {
 public:
  using error::error;
};

/// Truncated or corrupt input. `offset` is the byte position where decoding stopped.
class decode_error : public error {
 public:
  decode_error(const std::string& what, std::size_t offset)
      : error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Filesystem-level failure (missing file, unwritable directory).
class io_error : public error {
 public:
  using error::error;
};

}  // namespace shadoc
