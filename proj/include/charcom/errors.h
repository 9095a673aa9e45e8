#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace charcom {

// Bad shapes, out-of-range scalars, empty inputs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A referenced character, adapter, or file does not exist.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pluggable judge or embedder returned a value outside its declared range.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed persisted artifact. `offset` is the byte position where decoding
// stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace charcom
