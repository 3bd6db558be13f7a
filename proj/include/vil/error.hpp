// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace vil {

/// Base for every error the library throws. The C API maps each subclass to a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed scenario configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable or malformed on disk.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Wire-level decode failure (bad magic, truncated payload, inconsistent counts).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Numerically degenerate input (collinear points, cut-locus log, reflection-only solutions).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace vil
