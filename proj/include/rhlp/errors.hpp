#pragma once

#include <stdexcept>
#include <string>

namespace rhlp {

// Malformed or insufficient input data (bad CSV, too few points, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rhlp
