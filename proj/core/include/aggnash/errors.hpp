#pragma once

#include <stdexcept>
#include <string>

namespace aggnash {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input (dimensions, ranges, file contents).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// An iterative routine hit its iteration cap before meeting its tolerance.
class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A NaN or infinity appeared in an iterate.
class NumericalDivergence : public Error {
 public:
  NumericalDivergence(const std::string& what, long iteration, int agent)
      : Error(what), iteration_(iteration), agent_(agent) {}
  long iteration() const noexcept { return iteration_; }
  int agent() const noexcept { return agent_; }

 private:
  long iteration_;
  int agent_;
};

/// The requested computation has no implementation for this model variant.
class Unsupported : public Error {
 public:
  using Error::Error;
};

}  // namespace aggnash
