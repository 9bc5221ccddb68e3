#pragma once

#include <stdexcept>
#include <string>

namespace arinar {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// invalid distribution / model parameter values (non-finite, bad range)
struct ParamError : Error {
  using Error::Error;
};

// tensor / sequence shape mismatches
struct ShapeError : Error {
  using Error::Error;
};

// corrupt or mismatched on-disk container
struct FormatError : Error {
  using Error::Error;
};

// training produced a non-finite loss or gradient
struct DivergenceError : Error {
  using Error::Error;
};

}  // namespace arinar
