#pragma once

#include <stdexcept>
#include <string>

namespace jlcm {

// Malformed or inconsistent input tables.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model, scenario or run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every class term of a subject contribution is -inf (or a density is not computable).
class DegenerateLikelihood : public std::runtime_error {
 public:
  DegenerateLikelihood(const std::string& what, std::string subject)
      : std::runtime_error(what), subject_(std::move(subject)) {}
  const std::string& subject() const noexcept { return subject_; }

 private:
  std::string subject_;
};

// Non-finite objective inside a finite-difference stencil.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int parameter)
      : std::runtime_error(what), parameter_(parameter) {}
  int parameter() const noexcept { return parameter_; }

 private:
  int parameter_;
};

// Out of [low, high] for a bounded basis or link.
class RangeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// No start of a fit (or no Monte Carlo replicate) reached convergence.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::string details = {})
      : std::runtime_error(what), details_(std::move(details)) {}
  const std::string& details() const noexcept { return details_; }

 private:
  std::string details_;
};

}  // namespace jlcm
