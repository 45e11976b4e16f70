#pragma once

#include <stdexcept>
#include <string>

namespace kgnf {

/// Failure categories. The CLI maps `usage` to exit code 2 and the numerical
/// kinds to exit code 3.
enum class ErrorKind {
  usage,
  truncation_exceeded,
  insufficient_order,
  aliasing_risk,
  format,
  divisor_below_floor,
  step_failure,
  threshold_too_high,
  numerical_breakdown,
};

inline const char* to_string(ErrorKind k)
{
  switch (k) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::truncation_exceeded: return "truncation-exceeded";
    case ErrorKind::insufficient_order: return "insufficient-order";
    case ErrorKind::aliasing_risk: return "aliasing-risk";
    case ErrorKind::format: return "format";
    case ErrorKind::divisor_below_floor: return "divisor-below-floor";
    case ErrorKind::step_failure: return "step-failure";
    case ErrorKind::threshold_too_high: return "threshold-too-high";
    case ErrorKind::numerical_breakdown: return "numerical-breakdown";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what)
      , kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }

  bool is_numerical() const noexcept
  {
    return kind_ == ErrorKind::divisor_below_floor || kind_ == ErrorKind::step_failure ||
           kind_ == ErrorKind::threshold_too_high || kind_ == ErrorKind::numerical_breakdown;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
  throw Error(kind, what);
}

}  // namespace kgnf
