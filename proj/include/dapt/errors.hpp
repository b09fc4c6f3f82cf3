#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dapt {

// Root of every error the pipeline raises. Callers that only need to contain
// failures (batch runner, CLI) catch this; everything else catches the
// specific subtype.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define DAPT_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* kind() const noexcept override { return #Name; }  \
  }

DAPT_DEFINE_ERROR(UnknownNode);
DAPT_DEFINE_ERROR(SelfLoop);
DAPT_DEFINE_ERROR(WouldCreateCycle);
DAPT_DEFINE_ERROR(CycleDetected);
DAPT_DEFINE_ERROR(DuplicateNode);
DAPT_DEFINE_ERROR(EmptyTranslation);
DAPT_DEFINE_ERROR(IoError);
DAPT_DEFINE_ERROR(MissingIndex);
DAPT_DEFINE_ERROR(CacheMiss);
DAPT_DEFINE_ERROR(BothEmpty);
DAPT_DEFINE_ERROR(ConfigError);

#undef DAPT_DEFINE_ERROR

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  const char* kind() const noexcept override { return "MalformedRecord"; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class BackendFailure {
  kTransport,
  kAuth,
  kRateLimitExhausted,
  kEmptyResponse,
  kDimensionMismatch,
};

const char* to_string(BackendFailure failure) noexcept;

class BackendError : public Error {
 public:
  BackendError(BackendFailure failure, const std::string& what)
      : Error(std::string(to_string(failure)) + ": " + what), failure_(failure) {}
  const char* kind() const noexcept override { return "BackendError"; }
  BackendFailure failure() const noexcept { return failure_; }

 private:
  BackendFailure failure_;
};

}  // namespace dapt
