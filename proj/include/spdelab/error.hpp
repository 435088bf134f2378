#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace spdelab {

// Base class for every error raised by the library. Subclasses name the
// failure category; the message carries the specifics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A coefficient field produced NaN/inf; `field()` names the offender.
class EvaluationError : public Error {
 public:
  EvaluationError(std::string field, const std::string& what)
      : Error("non-finite evaluation of field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ModelInvariantError : public Error {
 public:
  using Error::Error;
};

class UnderResolutionError : public Error {
 public:
  UnderResolutionError(double epsilon, double required_min)
      : Error("epsilon " + std::to_string(epsilon) + " is not resolved by the grid; need epsilon >= " +
              std::to_string(required_min)),
        required_min_(required_min) {}
  double required_min() const noexcept { return required_min_; }

 private:
  double required_min_;
};

class StabilityError : public Error {
 public:
  StabilityError(const std::string& what, double suggested_dt)
      : Error(what + " (suggested dt <= " + std::to_string(suggested_dt) + ")"), suggested_dt_(suggested_dt) {}
  double suggested_dt() const noexcept { return suggested_dt_; }

 private:
  double suggested_dt_;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

// Raised when a check or operation is asked to run outside the hypotheses
// under which its conclusion holds.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field_path, const std::string& what)
      : Error("validation failed at '" + field_path + "': " + what), field_path_(std::move(field_path)) {}
  const std::string& field_path() const noexcept { return field_path_; }

 private:
  std::string field_path_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> differences)
      : Error(what), differences_(std::move(differences)) {}
  const std::vector<double>& differences() const noexcept { return differences_; }

 private:
  std::vector<double> differences_;
};

}  // namespace spdelab
