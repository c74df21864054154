#ifndef PLUMECAST_ERROR_HPP
#define PLUMECAST_ERROR_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace plumecast {

/// Base of every failure raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)), detail_(what) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string field_;
  std::string detail_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

class StateError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "state"; }
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residual_history() const noexcept { return residuals_; }
  const char* kind() const noexcept override { return "convergence"; }

 private:
  std::vector<double> residuals_;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<double> losses)
      : Error(what), losses_(std::move(losses)) {}
  const std::vector<double>& loss_trace() const noexcept { return losses_; }
  const char* kind() const noexcept override { return "divergence"; }

 private:
  std::vector<double> losses_;
};

}  // namespace plumecast

#endif
