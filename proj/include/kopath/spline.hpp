#pragma once

#include <span>
#include <vector>

namespace kopath {

// Interpolating cubic spline with natural end conditions (zero second
// derivative). With fewer than four knots the not-a-knot spline is used,
// which degenerates to the interpolating line (2 knots) or parabola (3 knots).
class CubicSpline {
 public:
  CubicSpline() = default;
  // Knots must be strictly increasing; throws BadGrid otherwise.
  CubicSpline(std::span<const double> x, std::span<const double> y);

  double operator()(double x) const;
  double derivative(double x) const;

  const std::vector<double>& knots() const noexcept { return x_; }
  const std::vector<double>& values() const noexcept { return y_; }
  bool empty() const noexcept { return x_.empty(); }

 private:
  std::size_t segment(double x) const;

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
  bool uniform_ = false;
  double step_ = 0.0;
};

}  // namespace kopath
