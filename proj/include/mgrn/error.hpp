#pragma once

#include <stdexcept>
#include <string>

namespace mgrn {

// Every failure the library can raise, one code per contract violation.
// The CLI maps these onto exit-code categories (config / data / numeric).
enum class Errc {
  dimension_mismatch,
  empty_input,
  non_finite,
  length_mismatch,
  missing_membership,
  zero_degree,
  malformed_record,
  inconsistent_dimension,
  invalid_config,
  shape_mismatch,
  row_mismatch,
  missing_day,
  stale_trace,
  empty_dataset,
  no_graphs,
  missing_price,
  invalid_q,
  overlapping_ranges,
  io_error,
  bad_format,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::empty_input: return "empty_input";
    case Errc::non_finite: return "non_finite";
    case Errc::length_mismatch: return "length_mismatch";
    case Errc::missing_membership: return "missing_membership";
    case Errc::zero_degree: return "zero_degree";
    case Errc::malformed_record: return "malformed_record";
    case Errc::inconsistent_dimension: return "inconsistent_dimension";
    case Errc::invalid_config: return "invalid_config";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::row_mismatch: return "row_mismatch";
    case Errc::missing_day: return "missing_day";
    case Errc::stale_trace: return "stale_trace";
    case Errc::empty_dataset: return "empty_dataset";
    case Errc::no_graphs: return "no_graphs";
    case Errc::missing_price: return "missing_price";
    case Errc::invalid_q: return "invalid_q";
    case Errc::overlapping_ranges: return "overlapping_ranges";
    case Errc::io_error: return "io_error";
    case Errc::bad_format: return "bad_format";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

}  // namespace mgrn
