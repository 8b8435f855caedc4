#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "kopath/dataset.hpp"
#include "kopath/spline.hpp"

namespace kopath {

inline constexpr double kHalfPi = std::numbers::pi / 2.0;

// theta_i = (pi/2) * i / (nodes - 1); the default 101 nodes give 0.01*(pi/2) spacing.
std::vector<double> default_theta_grid(std::size_t nodes = 101);

// s = tan(theta) with theta clamped to pi/2 - 1e-9.
double scale_of_theta(double theta);

// Posterior over the data points given a noisy observation x at noise scale
// 1/s: w_i proportional to exp(-s^2/2 ||x_i - x||^2). s = 0 gives uniform weights.
std::vector<double> posterior_weights(const Dataset& data, std::span<const double> x, double s);

// Monte-Carlo estimate of the data separation function on a theta grid, with
// a cubic-spline surrogate of lambda(tan theta) over theta.
//
// The spline interpolates q = (1 - lambda) / cos^2(theta) (so lambda =
// 1 - q cos^2), not lambda itself: near pi/2 the curvature weight
// 1 - (1 - lambda) / cos^2 needs 1 - lambda to vanish faster than cos^2, which
// no interpolant of lambda over theta can preserve between the last two nodes.
// Grid values are reproduced exactly. When lambda(pi/2) < 1 the q form is
// unbounded and lambda is splined directly.
class LambdaEstimate {
 public:
  LambdaEstimate() = default;
  LambdaEstimate(std::vector<double> theta, std::vector<double> lambda, std::size_t n_data,
                 std::size_t k_noise, std::uint64_t seed);

  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::vector<double>& lambda() const noexcept { return lambda_; }
  const CubicSpline& spline() const noexcept { return spline_; }
  bool splines_complement() const noexcept { return complement_form_; }
  // Surrogate value and 1 - value at theta (no range check, no clamping).
  double value(double theta) const;
  double complement(double theta) const;
  std::size_t n_data() const noexcept { return n_data_; }
  std::size_t k_noise() const noexcept { return k_noise_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::vector<double> theta_;
  std::vector<double> lambda_;
  CubicSpline spline_;
  bool complement_form_ = false;
  std::size_t n_data_ = 0;
  std::size_t k_noise_ = 0;
  std::uint64_t seed_ = 0;
};

// lambda_hat(s) = 1/(n d k) sum_l sum_j || sum_i x_i w_i(x_j + z_l / s) ||^2.
// The same k noise draws are shared by every theta node and every j. The
// result is identical for any worker count. Throws BadGrid for a grid that
// is not strictly ascending inside [0, pi/2], BadShape for k == 0.
LambdaEstimate estimate_lambda(const Dataset& data, std::span<const double> theta_grid,
                               std::size_t k, std::uint64_t seed, unsigned threads = 0);

// Spline value at theta clamped to [0, 1]; OutOfRange outside [0, pi/2].
double eval_lambda(const LambdaEstimate& est, double theta);

// Closed form for q = N(0, I): s^2 / (1 + s^2), and 1 at s = inf.
double lambda_gaussian(double s);

// lambda for the symmetric pair {+v, -v}, ||v||^2 = d:
// E_{u ~ N(0,1)} tanh^2(s^2 d + s sqrt(d) u), by Gauss-Hermite quadrature.
double lambda_two_point(double s, std::size_t d, std::size_t quad_order = 200);

// lambda(tan theta) as a function of theta in [0, pi/2], backed either by an
// estimate's spline or by a closed form. Values are clamped to [0, 1].
class LambdaCurve {
 public:
  LambdaCurve(const LambdaEstimate& est);  // NOLINT: implicit on purpose
  static LambdaCurve from_function(std::function<double(double)> of_theta, std::string name);
  static LambdaCurve unit();      // lambda == 1
  static LambdaCurve gaussian();  // sin^2(theta)

  double operator()(double theta) const;
  // 1 - lambda(theta), computed without cancellation for closed forms.
  double complement(double theta) const;
  double at_endpoint() const { return (*this)(kHalfPi); }
  const std::string& name() const noexcept { return name_; }

 private:
  LambdaCurve() = default;

  std::shared_ptr<const LambdaEstimate> estimate_;
  std::function<double(double)> of_theta_;
  std::function<double(double)> complement_;
  std::string name_;
};

// CSV with header "theta,lambda" (17 significant digits) plus a JSON sidecar
// at <path>.json holding {n, k, seed, grid_spec}.
void save_lambda(const LambdaEstimate& est, const std::filesystem::path& path);
LambdaEstimate load_lambda(const std::filesystem::path& path);

}  // namespace kopath
