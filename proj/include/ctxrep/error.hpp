#pragma once

#include <stdexcept>
#include <string>

namespace ctxrep {

// Base of every error thrown by the library. Callers that only care about
// "something in ctxrep failed" can catch this one type.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

#define CTXREP_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                                  \
  public:                                                                      \
    using Error::Error;                                                        \
  }

CTXREP_DEFINE_ERROR(ValidationError);
CTXREP_DEFINE_ERROR(InvalidPermutation);
CTXREP_DEFINE_ERROR(RoleError);
CTXREP_DEFINE_ERROR(CardinalityGuard);
CTXREP_DEFINE_ERROR(InvalidRepetition);
CTXREP_DEFINE_ERROR(WitnessUnavailable);
CTXREP_DEFINE_ERROR(CapabilityError);
CTXREP_DEFINE_ERROR(CapacityError);
CTXREP_DEFINE_ERROR(EmptyContext);
CTXREP_DEFINE_ERROR(MockParseError);
CTXREP_DEFINE_ERROR(PreconditionError);
CTXREP_DEFINE_ERROR(RetryableError);
CTXREP_DEFINE_ERROR(FatalError);
CTXREP_DEFINE_ERROR(ConfigError);
CTXREP_DEFINE_ERROR(DatasetError);

#undef CTXREP_DEFINE_ERROR

// Malformed input file; carries the 1-based line number.
class IngestError : public Error {
public:
  IngestError(std::size_t line, const std::string &what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace ctxrep
