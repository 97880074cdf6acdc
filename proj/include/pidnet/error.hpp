#pragma once

#include <stdexcept>
#include <string>

namespace pidnet {

/// Error categories. The CLI maps each to a process exit code.
enum class ErrorKind {
  Config,      // invalid configuration or arguments (exit 2)
  Data,        // malformed or missing input data (exit 3)
  Numerical,   // divergence, non-finite values (exit 4)
  Shape,       // dimension mismatch between containers
  Domain,      // argument outside the mathematical domain of a function
  Constraint,  // design variable outside its admissible bounds
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::Shape, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct ConstraintViolation : Error {
  explicit ConstraintViolation(const std::string& w) : Error(ErrorKind::Constraint, w) {}
};

}  // namespace pidnet
