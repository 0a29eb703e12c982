#pragma once

#include <stdexcept>
#include <string>

namespace wg {

enum class ErrorCode {
  invalid_argument,
  out_of_domain,
  threshold_proximity,
  solver_failure,
  accuracy_failure,
  coverage,
  stencil,
  domain_too_small,
  integrator_failure,
  window_too_short,
  admissibility,
  validation,
  io,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument:    return "invalid-argument";
    case ErrorCode::out_of_domain:       return "out-of-domain";
    case ErrorCode::threshold_proximity: return "threshold-proximity";
    case ErrorCode::solver_failure:      return "solver-failure";
    case ErrorCode::accuracy_failure:    return "accuracy-failure";
    case ErrorCode::coverage:            return "coverage";
    case ErrorCode::stencil:             return "stencil";
    case ErrorCode::domain_too_small:    return "domain-too-small";
    case ErrorCode::integrator_failure:  return "integrator-failure";
    case ErrorCode::window_too_short:    return "window-too-short";
    case ErrorCode::admissibility:       return "admissibility";
    case ErrorCode::validation:          return "validation";
    case ErrorCode::io:                  return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace wg
