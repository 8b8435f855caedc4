#include "kopath/spline.hpp"

#include <algorithm>
#include <cmath>

#include "kopath/error.hpp"

namespace kopath {

CubicSpline::CubicSpline(std::span<const double> x, std::span<const double> y)
    : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
  const std::size_t n = x_.size();
  if (n < 2 || n != y_.size()) fail(ErrorKind::BadGrid, "spline needs >= 2 knots and matching values");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) fail(ErrorKind::BadGrid, "spline knots must be strictly increasing");

  m_.assign(n, 0.0);
  if (n == 3) {
    // Single parabola through the three knots; constant second derivative.
    const double d0 = (y_[1] - y_[0]) / (x_[1] - x_[0]);
    const double d1 = (y_[2] - y_[1]) / (x_[2] - x_[1]);
    const double c = 2.0 * (d1 - d0) / (x_[2] - x_[0]);
    std::fill(m_.begin(), m_.end(), c);
  } else if (n >= 4) {
    // Natural spline: tridiagonal system for interior second derivatives.
    std::vector<double> diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      diag[i] = 2.0 * (h0 + h1);
      upper[i] = h1;
      rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    // Thomas forward sweep; lower[i] = h_{i-1} = x_i - x_{i-1}.
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double lower = x_[i] - x_[i - 1];
      const double w = lower / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
      if (i == 1) break;
    }
  }

  step_ = (x_.back() - x_.front()) / static_cast<double>(n - 1);
  uniform_ = true;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(x_[i] - (x_.front() + step_ * static_cast<double>(i))) > 1e-12 * (1.0 + std::abs(x_[i])))
      uniform_ = false;
}

std::size_t CubicSpline::segment(double x) const {
  const std::size_t last = x_.size() - 2;
  if (x <= x_.front()) return 0;
  if (x >= x_.back()) return last;
  if (uniform_) {
    auto i = static_cast<std::size_t>((x - x_.front()) / step_);
    i = std::min(i, last);
    // Guard against rounding at knot boundaries.
    if (x < x_[i] && i > 0) --i;
    if (x > x_[i + 1] && i < last) ++i;
    return i;
  }
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  return std::min(static_cast<std::size_t>(it - x_.begin()) - 1, last);
}

double CubicSpline::operator()(double x) const {
  const std::size_t i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h;
  const double b = (x - x_[i]) / h;
  return a * y_[i] + b * y_[i + 1] +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double CubicSpline::derivative(double x) const {
  const std::size_t i = segment(x);
  const double h = x_[i + 1] - x_[i];
  const double a = (x_[i + 1] - x) / h;
  const double b = (x - x_[i]) / h;
  return (y_[i + 1] - y_[i]) / h +
         ((1.0 - 3.0 * a * a) * m_[i] + (3.0 * b * b - 1.0) * m_[i + 1]) * h / 6.0;
}

}  // namespace kopath
