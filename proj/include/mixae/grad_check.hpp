#pragma once

#include <cmath>
#include <functional>

#include "mixae/tensor.hpp"

namespace mixae {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = false;
};

/// Central finite differences of a scalar function, compared against the
/// caller's analytic gradient. Relative error is |a - n| / max(1, |a|, |n|).
inline GradCheckReport grad_check(const std::function<double(const Tensor&)>& f,
                                  const Tensor& point, const Tensor& analytic_grad,
                                  double tolerance, double h = 1e-4) {
  if (!point.same_shape(analytic_grad))
    throw ShapeError("grad_check: point " + shape_string(point.shape()) +
                     " vs gradient " + shape_string(analytic_grad.shape()));
  GradCheckReport report;
  Tensor x = point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = x[i];
    x[i] = orig + h;
    double fp = f(x);
    x[i] = orig - h;
    double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("grad_check: non-finite function value at coordinate " +
                           std::to_string(i));
    double numeric = (fp - fm) / (2.0 * h);
    double analytic = analytic_grad[i];
    double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    double rel = std::abs(analytic - numeric) / scale;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic;
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace mixae
