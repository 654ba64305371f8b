#ifndef SIAMPROG_COMMON_HPP_
#define SIAMPROG_COMMON_HPP_

#include <stdexcept>
#include <string>

namespace siamprog {

// Error taxonomy shared by all modules. The CLI maps these onto its exit
// codes: ConfigError -> 2, IoError -> 3, ValidationError -> 4,
// NumericError -> 5.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Raised when an operation produces NaN/Inf or an algorithm fails to
// converge numerically.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Shape or dimension disagreement between tensors.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

}  // namespace siamprog

#endif  // SIAMPROG_COMMON_HPP_
