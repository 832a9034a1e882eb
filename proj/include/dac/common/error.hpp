#pragma once

#include <stdexcept>
#include <string>

namespace dac {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; tests match on the concrete kinds.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or channel counts that do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, truncated payload, bad manifest line).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain.
class ValueError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Rejection sampling gave up.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dac
