#pragma once

#include <stdexcept>

namespace ierd {

/// File could not be read, decoded or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A gradient or loss is NaN/Inf. Raised before anything is modified.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ierd
