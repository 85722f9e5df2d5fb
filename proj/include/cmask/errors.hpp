#pragma once

#include <stdexcept>
#include <string>

namespace cmask {

// Invalid user-supplied parameter or shape mismatch. The CLI maps this to exit code 2.
class ParamError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input data: broken WAV header, corrupt checkpoint, truncated file.
// The CLI maps this to exit code 3.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cmask
