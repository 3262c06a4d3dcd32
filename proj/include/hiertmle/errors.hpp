#pragma once

#include <stdexcept>
#include <string>

namespace hiertmle {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define HIERTMLE_DEFINE_ERROR(Name)          \
  class Name : public Error {                \
   public:                                   \
    explicit Name(const std::string& what)   \
        : Error(std::string(#Name ": ") + what) {} \
  }

// data-model
HIERTMLE_DEFINE_ERROR(OutcomeOutOfBounds);
HIERTMLE_DEFINE_ERROR(WeightError);
HIERTMLE_DEFINE_ERROR(ParseError);
HIERTMLE_DEFINE_ERROR(SchemaError);
HIERTMLE_DEFINE_ERROR(InvariantError);
HIERTMLE_DEFINE_ERROR(IoError);

// interventions / density
HIERTMLE_DEFINE_ERROR(UnfittedReference);
HIERTMLE_DEFINE_ERROR(UnsupportedValue);
HIERTMLE_DEFINE_ERROR(DegenerateSupport);
HIERTMLE_DEFINE_ERROR(SeparationError);

// outcome / tmle / inference
HIERTMLE_DEFINE_ERROR(InsufficientData);
HIERTMLE_DEFINE_ERROR(NonConvergence);
HIERTMLE_DEFINE_ERROR(DimensionMismatch);
HIERTMLE_DEFINE_ERROR(AllWeightsZero);
HIERTMLE_DEFINE_ERROR(MismatchedRuns);

// simulate / cli
HIERTMLE_DEFINE_ERROR(SpecError);
HIERTMLE_DEFINE_ERROR(ConfigError);

#undef HIERTMLE_DEFINE_ERROR

}  // namespace hiertmle
