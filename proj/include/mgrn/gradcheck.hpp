#pragma once

// Central-difference gradient oracle. This is the reference every analytic
// gradient in the model is checked against; it only ever calls the forward
// path, so it stays independent of the backward implementation.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mgrn/error.hpp"

namespace mgrn {

using ScalarFn = std::function<double(const std::vector<double>&)>;

inline std::vector<double> finite_diff_grad(const ScalarFn& f, std::vector<double> x,
                                            double h) {
  if (h <= 0.0) fail(Errc::invalid_config, "finite_diff_grad: h must be positive");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      fail(Errc::non_finite, "finite_diff_grad: f non-finite near coordinate " +
                                 std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

struct GradCompare {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Per-coordinate relative error with a scale floor. The floor keeps the
// central-difference noise floor (~1e-10 for unit-scale losses at h=1e-5)
// from registering as a large relative error on near-zero gradients.
inline GradCompare compare_gradients(const std::vector<double>& analytic,
                                     const std::vector<double>& numeric,
                                     double scale_floor = 1e-5) {
  if (analytic.size() != numeric.size())
    fail(Errc::length_mismatch, "compare_gradients: sizes differ");
  GradCompare res;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), scale_floor});
    const double rel = std::fabs(analytic[i] - numeric[i]) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
      res.analytic_at_worst = analytic[i];
      res.numeric_at_worst = numeric[i];
    }
  }
  return res;
}

}  // namespace mgrn
