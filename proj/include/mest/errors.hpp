#pragma once

#include <stdexcept>
#include <string>

namespace mest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MEST_DEFINE_ERROR(Name)                  \
  class Name : public Error {                    \
   public:                                       \
    explicit Name(const std::string& what)       \
        : Error(std::string(#Name ": ") + what) {} \
  }

MEST_DEFINE_ERROR(UnsupportedResponse);
MEST_DEFINE_ERROR(AssumptionViolated);
MEST_DEFINE_ERROR(InvalidArgument);
MEST_DEFINE_ERROR(NonFiniteIntegrand);
MEST_DEFINE_ERROR(BracketFailure);
MEST_DEFINE_ERROR(NoConvergence);
MEST_DEFINE_ERROR(InvalidDelta);
MEST_DEFINE_ERROR(KKTViolation);
MEST_DEFINE_ERROR(InvalidShape);
MEST_DEFINE_ERROR(RankDeficient);
MEST_DEFINE_ERROR(LPNumericalFailure);
MEST_DEFINE_ERROR(CycleLimit);
MEST_DEFINE_ERROR(IoError);
MEST_DEFINE_ERROR(ConfigError);

#undef MEST_DEFINE_ERROR

}  // namespace mest
