// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace myq {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input or configuration failed validation (CLI exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UsageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class AssemblyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateRangeError : public ValidationError {
 public:
  DegenerateRangeError(const std::string& what, int layer = -1)
      : ValidationError(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

class CalibrationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed binary file; carries the byte offset where parsing failed.
class FormatError : public ValidationError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : ValidationError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Requested memory budget is below the all-1-bit floor (CLI exit code 3).
class BudgetError : public Error {
 public:
  BudgetError(const std::string& what, double floor_mb)
      : Error(what), floor_mb_(floor_mb) {}
  double floor_mb() const noexcept { return floor_mb_; }

 private:
  double floor_mb_;
};

}  // namespace myq
