#ifndef RISV_ERROR_HPP
#define RISV_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace risv {

/// Base class of everything thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Vector or path sizes do not agree.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Invalid parameter value (non-positive length, eps <= 0, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Invalid experiment configuration. `field` is the dotted path of the offending entry.
class ConfigError : public Error {
public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// An iterative solver stopped before reaching its tolerance.
class SolverError : public Error {
public:
  SolverError(const std::string& what, double residual, std::ptrdiff_t step = -1)
      : Error(what + " (residual " + std::to_string(residual) +
              (step >= 0 ? ", step " + std::to_string(step) : std::string()) + ")"),
        residual_(residual), step_(step) {}
  double residual() const noexcept { return residual_; }
  std::ptrdiff_t step() const noexcept { return step_; }

private:
  double residual_;
  std::ptrdiff_t step_;
};

namespace detail {

inline void require_size(std::ptrdiff_t got, std::ptrdiff_t expected, const char* what) {
  if (got != expected) {
    throw DimensionError(std::string(what) + ": expected size " + std::to_string(expected) +
                         ", got " + std::to_string(got));
  }
}

} // namespace detail
} // namespace risv

#endif // RISV_ERROR_HPP
