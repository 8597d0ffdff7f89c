#pragma once

#include <stdexcept>
#include <string>

namespace dipsq {

enum class ErrorKind {
  invalid_argument,
  invalid_filling,
  empty_system,
  degenerate_geometry,
  insufficient_data,
  capacity,
  singular,
  bracket_failure,
  no_crossing,
  ambiguous_crossing,
  fit_failure,
  integration_failure,
  insufficient_length,
  all_shelved,
  domain,
  unanchored,
  tolerance,
  extrapolation_refused,
  squeezing_undefined,
  schema,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::invalid_filling: return "invalid-filling";
    case ErrorKind::empty_system: return "empty-system";
    case ErrorKind::degenerate_geometry: return "degenerate-geometry";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::singular: return "singular";
    case ErrorKind::bracket_failure: return "bracket-failure";
    case ErrorKind::no_crossing: return "no-crossing";
    case ErrorKind::ambiguous_crossing: return "ambiguous-crossing";
    case ErrorKind::fit_failure: return "fit-failure";
    case ErrorKind::integration_failure: return "integration-failure";
    case ErrorKind::insufficient_length: return "insufficient-length";
    case ErrorKind::all_shelved: return "all-shelved";
    case ErrorKind::domain: return "domain";
    case ErrorKind::unanchored: return "unanchored-boundary";
    case ErrorKind::tolerance: return "tolerance";
    case ErrorKind::extrapolation_refused: return "extrapolation-refused";
    case ErrorKind::squeezing_undefined: return "squeezing-undefined";
    case ErrorKind::schema: return "schema";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace dipsq
