#pragma once

#include <stdexcept>
#include <string>

namespace mswin {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or inconsistent shapes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// On-disk data does not match its header.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the training loop when a loss turns non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mswin
