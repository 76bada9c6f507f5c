#pragma once

#include <stdexcept>
#include <string>

namespace flexor {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Missing or misdeclared columns, malformed configuration.
class SchemaError : public Error {
  using Error::Error;
};

// A cell of the input could not be parsed as a number.
class ParseError : public Error {
  using Error::Error;
};

// An empty (study, group) cell; the message names the cell.
class PositivityError : public Error {
  using Error::Error;
};

class DimensionError : public Error {
  using Error::Error;
};

// Optimizer ran out of iterations; carries the last gradient norm.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gradient_norm)
      : Error(what), final_gradient_norm(gradient_norm) {}
  double final_gradient_norm;
};

// Numerically singular Hessian while fitting an unpenalized model.
class SeparationError : public Error {
  using Error::Error;
};

class NumericError : public Error {
  using Error::Error;
};

// A group with zero weighted mass where positive mass is required.
class DegenerateGroupError : public Error {
  using Error::Error;
};

class BootstrapError : public Error {
  using Error::Error;
};

class GenerationError : public Error {
  using Error::Error;
};

class ConfigError : public Error {
  using Error::Error;
};

}  // namespace flexor
