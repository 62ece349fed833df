#pragma once

#include <stdexcept>
#include <string>

namespace gridforge {

/// Base class for every error raised by the library. Each subclass maps to a
/// distinct process exit code so CLI failures stay machine-readable.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

#define GRIDFORGE_ERROR(Name, code)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    using Error::Error;                                               \
    int exit_code() const noexcept override { return code; }          \
  }

GRIDFORGE_ERROR(NameError, 2);
GRIDFORGE_ERROR(ParameterError, 2);
GRIDFORGE_ERROR(InputError, 4);
GRIDFORGE_ERROR(EncodingError, 4);
GRIDFORGE_ERROR(InsufficientDataError, 5);
GRIDFORGE_ERROR(ResidualEmptyError, 5);
GRIDFORGE_ERROR(DegenerateGridError, 6);
GRIDFORGE_ERROR(DegenerateBlockError, 6);
GRIDFORGE_ERROR(CorruptBlockError, 7);
GRIDFORGE_ERROR(ShapeError, 8);

#undef GRIDFORGE_ERROR

}  // namespace gridforge
