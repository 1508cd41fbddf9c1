#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace optgym {

enum class ErrorCode {
  kShapeArity,
  kTooManyLoops,
  kNotDivisor,
  kLoopBudgetExceeded,
  kAlreadyParallelized,
  kIndexOutOfRange,
  kNotConvolution,
  kAlreadyApplied,
  kLoopsTransformed,
  kAlreadyVectorized,
  kLimitExceeded,
  kStepOutOfRange,
  kExtentMismatch,
  kSafetyLimitExceeded,
  kEpisodeDone,
  kMaskedAction,
  kAllMasked,
  kLengthMismatch,
  kNonFiniteLoss,
  kOverflow,
  kInvalidSchedule,
  kParse,
  kTimeout,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace optgym
