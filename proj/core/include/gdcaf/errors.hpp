#pragma once

#include <stdexcept>
#include <string>

namespace gdcaf {

// Error taxonomy used across the library. The CLI maps these onto distinct
// exit codes: contract/shape/bounds -> 2, numeric -> 3, io -> 4.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BoundsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gdcaf
