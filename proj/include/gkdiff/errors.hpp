#pragma once

#include <stdexcept>
#include <string>

namespace gkdiff {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Input shapes/values outside an operation's contract.
struct InputError : Error {
  using Error::Error;
};

// Mismatched lattice dimensions between objects.
struct DimensionError : Error {
  using Error::Error;
};

// A table or span would exceed the configured enumeration cap.
struct CapacityError : Error {
  using Error::Error;
};

// Numerically degenerate linear algebra (near-duplicate atoms, singular Gram matrix).
struct ConditioningError : Error {
  using Error::Error;
};

// A quadrature or iterative estimate failed to reach the requested tolerance.
struct AccuracyError : Error {
  using Error::Error;
};

// A structural invariant of a dynamics model failed its construction-time check.
struct ModelError : Error {
  ModelError(const std::string& invariant, const std::string& detail)
      : Error("model invariant violated [" + invariant + "]: " + detail),
        invariant(invariant) {}
  std::string invariant;
};

// The marginal carries no fluctuation (zero variance), so transport
// coefficients are undefined.
struct DegenerateMarginalError : Error {
  using Error::Error;
};

// A basis does not span the full single-site function space.
struct CompletenessError : Error {
  using Error::Error;
};

// Statistics too thin to report (fewer than two batches, empty series, ...).
struct StatisticsError : Error {
  using Error::Error;
};

}  // namespace gkdiff
