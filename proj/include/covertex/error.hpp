#pragma once

#include <stdexcept>
#include <string>

namespace covertex {

// Invalid parameters (bits per symbol too large for the class count, bad
// policy values, unsupported patch counts, ...).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// A symbol stream, header or on-disk file is inconsistent with its own
// description.
class FramingError : public std::runtime_error {
 public:
  explicit FramingError(const std::string& what) : std::runtime_error(what) {}
};

// Failure reported by, or while talking to, a channel backend.
class BackendError : public std::runtime_error {
 public:
  explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace covertex
