#ifndef REGIONQA_ERRORS_HPP_
#define REGIONQA_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace regionqa {

/// Incompatible tensor or config dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed, missing or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or Inf showed up where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace regionqa

#endif  // REGIONQA_ERRORS_HPP_
