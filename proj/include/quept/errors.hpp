// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace quept {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape mismatch; message names both shapes.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

/// Invalid argument value (empty input, bad range, unknown mode, ...).
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

/// A bit-width was requested that the calibrated set does not cover.
class UnsupportedBitError : public Error {
 public:
  explicit UnsupportedBitError(const std::string& msg) : Error(msg) {}
};

/// The average-bit budget cannot be met by any assignment.
class InfeasibleBudgetError : public Error {
 public:
  explicit InfeasibleBudgetError(const std::string& msg) : Error(msg) {}
};

/// Exhaustive search was asked to enumerate too large an instance.
class InstanceTooLargeError : public Error {
 public:
  explicit InstanceTooLargeError(const std::string& msg) : Error(msg) {}
};

class LoadError : public Error {
 public:
  explicit LoadError(const std::string& msg) : Error(msg) {}
};

class VersionError : public LoadError {
 public:
  explicit VersionError(const std::string& msg) : LoadError(msg) {}
};

class ChecksumError : public LoadError {
 public:
  explicit ChecksumError(const std::string& msg) : LoadError(msg) {}
};

class TruncatedError : public LoadError {
 public:
  explicit TruncatedError(const std::string& msg) : LoadError(msg) {}
};

/// Bad CLI flags or paths.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(msg) {}
};

}  // namespace quept
