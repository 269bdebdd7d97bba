#pragma once

#include <span>
#include <vector>

namespace faid {

/// Natural cubic spline through (x_k, y_k); x must be strictly increasing.
/// Two knots degenerate to linear interpolation. Outside the knot range the
/// end cubic is extrapolated.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::span<const double> x, std::span<const double> y);

  double operator()(double x) const;

 private:
  std::vector<double> x_, y_, m_;  // m_ = second derivatives at knots
};

}  // namespace faid
