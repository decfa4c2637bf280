#include "fuzzyseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fuzzyseg/errors.hpp"

namespace fuzzyseg::tk {

double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_diff_grad_check(const std::function<double(const Tensor&)>& f,
                                       const Tensor& analytic, const Tensor& x, double step) {
  require_same_shape(analytic, x, "finite_diff_grad_check");
  if (!(step > 0.0)) throw ArgumentError("finite_diff_grad_check: step must be positive");
  if (!std::isfinite(f(x))) throw NumericalError("finite_diff_grad_check: f(x) is not finite");

  GradCheckResult r;
  r.coordinates = x.numel();
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("finite_diff_grad_check: non-finite value near coordinate " +
                           std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double err = grad_rel_error(analytic[i], numeric);
    r.max_abs_error = std::max(r.max_abs_error, std::abs(analytic[i] - numeric));
    if (std::max(std::abs(analytic[i]), std::abs(numeric)) < kGradErrorFloor) ++r.below_floor;
    if (i == 0 || err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
  }
  return r;
}

GradCheckResult finite_diff_grad_check(const std::function<Var(Var)>& build, const Tensor& x,
                                       double step) {
  Tensor analytic;
  {
    Graph g;
    Var in = g.parameter(x);
    Var out = build(in);
    g.backward(out);
    analytic = g.grad(in);
  }
  auto f = [&build](const Tensor& t) {
    Graph g;
    return build(g.constant(t)).value().item();
  };
  return finite_diff_grad_check(f, analytic, x, step);
}

}  // namespace fuzzyseg::tk
