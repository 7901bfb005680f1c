#pragma once

#include <stdexcept>
#include <string>

namespace smpcl {

// Shape or size contract violated by a caller.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain of an operation (log of 0, even kernel, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Bad configuration, bad file, or bad CLI input. Maps to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Autodiff misuse: non-scalar loss, detached graph, reused tape.
class AutogradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training diverged (non-finite loss).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace smpcl
