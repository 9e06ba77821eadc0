#pragma once

#include <stdexcept>
#include <string>

namespace satq {

// Invalid argument value or index (bad action, out-of-range hyperparameter).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A graph, matrix or chain has the wrong shape or connectivity.
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Iterative method failed or a result left its admissible set.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Enumeration or dense evaluation would exceed the configured budget.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Experiment configuration rejected; message lists every offending field.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace satq
