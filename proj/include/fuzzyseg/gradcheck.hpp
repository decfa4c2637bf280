#pragma once

#include <cstddef>
#include <functional>

#include "fuzzyseg/graph.hpp"
#include "fuzzyseg/tensor.hpp"

namespace fuzzyseg::tk {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
  std::size_t coordinates = 0;
  double max_abs_error = 0.0;
  std::size_t below_floor = 0;  // coordinates with |a|, |n| < kGradErrorFloor
};

// Denominator floor of the relative error. Central differences in double
// precision carry roughly 1e-16 |f| / step of roundoff (about 1e-11 at step
// 1e-5), so gradients much smaller than this cannot be resolved to 1e-4
// relative; below the floor the test is effectively |a - n| <= 1e-10.
inline constexpr double kGradErrorFloor = 1e-6;

// |a - n| / max(|a|, |n|, kGradErrorFloor); used by every gradient check.
double grad_rel_error(double analytic, double numeric);

// f maps a scalar-valued function of x to its value. `analytic` is the
// gradient claimed at x. Central differences with the given step; the result
// is the max over coordinates of grad_rel_error.
// Throws NumericalError if f(x) is not finite.
GradCheckResult finite_diff_grad_check(const std::function<double(const Tensor&)>& f,
                                       const Tensor& analytic, const Tensor& x,
                                       double step = 1e-5);

// Convenience form: `build` records a scalar expression of its input on a
// fresh graph; the analytic gradient comes from Graph::backward.
GradCheckResult finite_diff_grad_check(const std::function<Var(Var)>& build,
                                       const Tensor& x, double step = 1e-5);

}  // namespace fuzzyseg::tk
