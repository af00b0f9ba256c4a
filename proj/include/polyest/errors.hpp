#pragma once

#include <stdexcept>
#include <string>

namespace polyest {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define POLYEST_DEFINE_ERROR(Name)        \
  class Name : public Error {             \
   public:                                \
    explicit Name(const std::string& what) \
        : Error(#Name ": " + what) {}     \
  }

// moments
POLYEST_DEFINE_ERROR(DegenerateSample);
POLYEST_DEFINE_ERROR(InsufficientData);
POLYEST_DEFINE_ERROR(UnsupportedDistribution);
POLYEST_DEFINE_ERROR(OrderUnavailable);
POLYEST_DEFINE_ERROR(InvalidShape);

// stochpoly
POLYEST_DEFINE_ERROR(DegenerateCorrelantMatrix);
POLYEST_DEFINE_ERROR(DimensionMismatch);
POLYEST_DEFINE_ERROR(IndexOutOfWindow);

// pmm / sls
POLYEST_DEFINE_ERROR(NoConvergence);
POLYEST_DEFINE_ERROR(AsymmetryDetected);
POLYEST_DEFINE_ERROR(NonFiniteObjective);

// volterra
POLYEST_DEFINE_ERROR(SignalTooShort);
POLYEST_DEFINE_ERROR(LengthMismatch);
POLYEST_DEFINE_ERROR(SingularSystem);

// signals
POLYEST_DEFINE_ERROR(InvalidSpec);

// changepoint
POLYEST_DEFINE_ERROR(IndistinguishableRegimes);
POLYEST_DEFINE_ERROR(DriftViolation);

// harness
POLYEST_DEFINE_ERROR(ConfigError);
POLYEST_DEFINE_ERROR(ParseError);

#undef POLYEST_DEFINE_ERROR

}  // namespace polyest
