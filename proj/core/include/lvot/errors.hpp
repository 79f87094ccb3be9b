#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lvot {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A price at or outside its static no-arbitrage bounds.
class OutOfBoundsError : public DomainError {
 public:
  OutOfBoundsError(const std::string& what, double bound, bool is_lower)
      : DomainError(what), bound_(bound), is_lower_(is_lower) {}

  double bound() const noexcept { return bound_; }
  bool is_lower() const noexcept { return is_lower_; }

 private:
  double bound_;
  bool is_lower_;
};

/// A discretisation that would exceed the configured size limits.
class ResourceError : public std::runtime_error {
 public:
  ResourceError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Propagation produced a step carrying no mass at all.
class DegenerateMassError : public std::runtime_error {
 public:
  DegenerateMassError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Newton iteration that did not reach its tolerance.
class NewtonFailure : public std::runtime_error {
 public:
  NewtonFailure(const std::string& what, double residual_norm)
      : std::runtime_error(what), residual_norm_(residual_norm) {}

  double residual_norm() const noexcept { return residual_norm_; }

 private:
  double residual_norm_;
};

/// Invalid run configuration; field() is a dotted path such as "solver.c_mart".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace lvot
