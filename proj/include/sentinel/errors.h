#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sentinel {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid rule pack, gateway config or training config. Raised at load time.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (JSON, JSONL, CSV, TSV, model file).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Vector or matrix sizes that disagree with the declared layout.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite value in a numeric pipeline (forward pass, training loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Dataset level failures: unreadable files, too many malformed rows.
class DataError : public Error {
 public:
  using Error::Error;
};

enum class ProviderErrorKind {
  kInit,
  kTimeout,
  kUnreachable,
  kBadStatus,
  kDimensionMismatch,
  kProtocol,
};

const char* to_string(ProviderErrorKind kind);

// Failure of an embedding backend. `index` is set when the failure belongs to
// one element of a batch.
class ProviderError : public Error {
 public:
  static constexpr std::size_t kNoIndex = static_cast<std::size_t>(-1);

  ProviderError(ProviderErrorKind kind, const std::string& message,
                std::size_t index = kNoIndex)
      : Error(message), kind_(kind), index_(index) {}

  ProviderErrorKind kind() const noexcept { return kind_; }
  std::size_t index() const noexcept { return index_; }
  bool has_index() const noexcept { return index_ != kNoIndex; }

 private:
  ProviderErrorKind kind_;
  std::size_t index_;
};

}  // namespace sentinel
