#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hsbe {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Angular momentum requested but the domain carries no rotation axis.
class NoAxisError : public Error {
 public:
  NoAxisError() : Error("no axis: angular momentum needs a rotation axis (x0, w)") {}
};

/// A time step violates a stability guard (dt * max rate <= 1).
class StepSizeError : public Error {
 public:
  StepSizeError(double dt, double max_rate)
      : Error("step size " + std::to_string(dt) + " violates dt*max_rate <= 1 (max_rate=" +
              std::to_string(max_rate) + ")"),
        dt(dt),
        max_rate(max_rate) {}
  double dt;
  double max_rate;
};

/// Ray tracing could not be completed (no exit found, degenerate normal, bounce cap).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Picard iteration stopped contracting.
class NonContractionError : public Error {
 public:
  NonContractionError(std::vector<double> ratios, std::vector<double> gaps)
      : Error("non-contraction: iterate ratio >= 1 for 3 consecutive iterations"),
        ratios(std::move(ratios)),
        gaps(std::move(gaps)) {}
  std::vector<double> ratios;
  std::vector<double> gaps;
};

/// Norm growth past the instability threshold.
class InstabilityError : public Error {
 public:
  InstabilityError(double t, double norm, double initial)
      : Error("instability: norm " + std::to_string(norm) + " at t=" + std::to_string(t) +
              " exceeds 10x initial " + std::to_string(initial)),
        t(t),
        norm(norm),
        initial(initial) {}
  double t;
  double norm;
  double initial;
};

/// Invalid input data (negative norms in a fit, non-radial data, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Regression baselines recorded with different resolution parameters.
class IncomparableError : public Error {
 public:
  IncomparableError(const std::string& expected, const std::string& actual)
      : Error("incomparable configurations: fingerprint " + actual + " != baseline " + expected) {}
};

/// Malformed configuration file or override.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsbe
