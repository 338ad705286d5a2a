#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace a2os2a {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Backward was asked for a loss that is not a single element.
class RankError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the codomain an operation requires
/// (non-binary spikes, non-ternary values, negative keys).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Object used in a state that does not permit the call, e.g. eval-mode
/// batch norm before any statistics exist, or a second backward pass.
class StateError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint does not fit the data or config it is used with.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace a2os2a
