#pragma once

#include <stdexcept>
#include <string>

namespace edgespec {

enum class ErrorKind { Io, Format, Data, Config };

// Base of every error the library throws. Callers that only need a coarse
// classification (the CLI maps kinds to exit codes) switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

// A file was readable but its contents do not follow the expected layout.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

// Inputs are well-formed but numerically unusable (too few pixels, singular
// fits, dimension mismatches, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

// Parameters are inconsistent with each other or with the scene.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

}  // namespace edgespec
