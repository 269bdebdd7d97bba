#include "faid/spline.hpp"

#include <algorithm>
#include <cstddef>
#include <iterator>

#include "faid/errors.hpp"

namespace faid {

NaturalCubicSpline::NaturalCubicSpline(std::span<const double> x,
                                       std::span<const double> y)
    : x_(x.begin(), x.end()), y_(y.begin(), y.end()), m_(x.size(), 0.0) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n)
    throw ValidationError("spline needs at least two knots with values");
  for (std::size_t k = 1; k < n; ++k)
    if (!(x_[k] > x_[k - 1]))
      throw ValidationError("spline knots must be strictly increasing");
  if (n == 2)
    return;

  // Thomas algorithm on the interior second derivatives; m_0 = m_{n-1} = 0.
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t r = 0; r < k; ++r) {
    const double h0 = x_[r + 1] - x_[r], h1 = x_[r + 2] - x_[r + 1];
    diag[r] = 2.0 * (h0 + h1);
    upper[r] = h1;
    rhs[r] = 6.0 * ((y_[r + 2] - y_[r + 1]) / h1 - (y_[r + 1] - y_[r]) / h0);
  }
  for (std::size_t r = 1; r < k; ++r) {
    const double lower = x_[r + 1] - x_[r];
    const double w = lower / diag[r - 1];
    diag[r] -= w * upper[r - 1];
    rhs[r] -= w * rhs[r - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t r = k - 1; r-- > 0;)
    m_[r + 1] = (rhs[r] - upper[r] * m_[r + 2]) / diag[r];
}

double NaturalCubicSpline::operator()(double x) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), x);
  std::size_t seg = static_cast<std::size_t>(std::distance(x_.begin(), it));
  seg = std::clamp<std::size_t>(seg, 1, x_.size() - 1) - 1;

  const double h = x_[seg + 1] - x_[seg];
  const double a = (x_[seg + 1] - x) / h, b = (x - x_[seg]) / h;
  return a * y_[seg] + b * y_[seg + 1]
         + ((a * a * a - a) * m_[seg] + (b * b * b - b) * m_[seg + 1]) * h * h
               / 6.0;
}

}  // namespace faid
