#pragma once

#include <stdexcept>
#include <string>

namespace dfl {

/// Base for every error raised by the library. The CLI maps ConfigError to
/// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DFL_DEFINE_ERROR(Name)              \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  };

DFL_DEFINE_ERROR(DimensionMismatch)
DFL_DEFINE_ERROR(InvalidArgument)
DFL_DEFINE_ERROR(InfeasibleSpec)
DFL_DEFINE_ERROR(NonConvergence)
DFL_DEFINE_ERROR(ResourceLimit)
DFL_DEFINE_ERROR(InfeasibleTarget)
DFL_DEFINE_ERROR(ParseError)
DFL_DEFINE_ERROR(GapError)
DFL_DEFINE_ERROR(NonUniformStep)
DFL_DEFINE_ERROR(InsufficientData)
DFL_DEFINE_ERROR(MissingChannel)
DFL_DEFINE_ERROR(NonFiniteLoss)
DFL_DEFINE_ERROR(SchemaMismatch)
DFL_DEFINE_ERROR(ConfigError)

// Shape and length variants of DimensionMismatch.
class ShapeMismatch : public DimensionMismatch {
 public:
  using DimensionMismatch::DimensionMismatch;
};
class LengthMismatch : public DimensionMismatch {
 public:
  using DimensionMismatch::DimensionMismatch;
};

#undef DFL_DEFINE_ERROR

}  // namespace dfl
