#pragma once

#include <stdexcept>
#include <string>

namespace demixkit {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension disagreements. Messages always name the offending shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad argument values: out-of-range labels, too-short segments,
// degenerate batches, zero-power signals.
class ValueError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected in an operation result.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File problems: malformed WAV headers, corrupt checkpoints, missing paths.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace demixkit
