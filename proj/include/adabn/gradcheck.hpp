#pragma once

#include <cmath>
#include <functional>

#include "adabn/errors.hpp"
#include "adabn/tensor.hpp"

namespace adabn {

// Central-difference check of an analytic gradient. `f` maps a point to a
// scalar; the point is perturbed one coordinate at a time. Returns the worst
// relative error |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// Runs in wide (double) precision by construction.
inline double finite_difference_check(const std::function<double(const TensorD&)>& f,
                                      TensorD point, const TensorD& analytic_grad, double h) {
  if (!point.same_shape(analytic_grad))
    throw ShapeError("finite_difference_check: gradient " + shape_str(analytic_grad.shape()) +
                     " does not match point " + shape_str(point.shape()));
  if (!(h > 0)) throw ParameterError("finite_difference_check: step must be positive");

  double worst = 0.0;
  for (std::int64_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double fp = f(point);
    point[i] = saved - h;
    const double fm = f(point);
    point[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_check: non-finite evaluation at coordinate " +
                         std::to_string(i));
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = analytic_grad[i];
    const double err =
        std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace adabn
