#pragma once

#include <stdexcept>
#include <string>

namespace vimq {

// Base for every error raised by the library. The CLI maps subclasses onto
// exit codes (IO -> 3, numeric/shape/config -> 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vimq
