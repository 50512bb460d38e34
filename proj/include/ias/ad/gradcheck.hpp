#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ias/ad/tape.hpp"
#include "ias/core/random.hpp"

namespace ias::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int failures = 0;
};

// Relative error with a floor so coordinates whose true gradient is ~0 are
// judged on absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares analytic gradients (accumulated into Parameter::grad by `loss`)
// with central differences on `probes` random coordinates per parameter.
// `loss` must build a fresh tape, return the scalar, and call backward when
// `with_grad` is true.
inline GradCheckResult check_parameter_gradients(
    const std::vector<Parameter<double>*>& params,
    const std::function<double(bool with_grad)>& loss, Rng& rng, int probes, double step = 1e-4,
    double tol = 1e-3) {
  for (auto* p : params) p->zero_grad();
  loss(true);
  GradCheckResult r;
  for (auto* p : params) {
    const Matrix<double> analytic = p->grad;
    for (int k = 0; k < probes; ++k) {
      const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(p->value.size())));
      double& w = p->value.data()[idx];
      const double saved = w;
      w = saved + step;
      const double up = loss(false);
      w = saved - step;
      const double down = loss(false);
      w = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic.data()[idx], numeric);
      r.max_rel_error = std::max(r.max_rel_error, err);
      ++r.checked;
      if (err > tol) ++r.failures;
    }
  }
  for (auto* p : params) p->zero_grad();
  return r;
}

}  // namespace ias::ad
