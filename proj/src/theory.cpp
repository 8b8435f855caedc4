#include "kopath/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "kopath/energy.hpp"
#include "kopath/error.hpp"
#include "kopath/quadrature.hpp"

namespace kopath {
namespace {

constexpr double kEtaUpper = 40.0;

double eta_simpson(std::size_t nodes) { return simpson([](double t) { return eta(t); }, 0.0, kEtaUpper, nodes); }

}  // namespace

BoundReport make_report(std::string quantity, double value, double bound, double tolerance, std::string note) {
  BoundReport r;
  r.quantity = std::move(quantity);
  r.value = value;
  r.bound = bound;
  r.tolerance = tolerance;
  r.margin = bound + tolerance - value;
  r.pass = std::isfinite(value) && value <= bound + tolerance;
  r.note = std::move(note);
  return r;
}

double eta(double t, std::size_t order) {
  if (!(t >= 0.0)) fail(ErrorKind::OutOfRange, "eta needs t >= 0");
  if (std::isinf(t)) return 0.0;
  const auto& rule = gauss_hermite(order);
  const double half = 0.5 * t;
  const double body = rule.expect([&](double z) { return 0.5 / std::cosh(half * z); });
  return std::exp(-t * t / 8.0) * body;
}

double eta_bound(double t) {
  if (t <= 0.0) return 1.0;
  return std::min(1.0, std::sqrt(2.0 / std::numbers::pi) * (2.0 / t) * std::exp(-t * t / 8.0));
}

BoundReport check_eta_integral() {
  const double coarse = eta_simpson(4001);
  const double fine = eta_simpson(8001);
  return make_report("integral of eta over [0, inf)", fine, 3.0, 0.0,
                     "refinement change " + std::to_string(std::abs(fine - coarse)));
}

double eta_integral_refinement() { return std::abs(eta_simpson(8001) - eta_simpson(4001)); }

GapIntegral lambda_gap_integral(const LambdaEstimate& est) {
  const auto& th = est.theta();
  if (th.size() < 3) fail(ErrorKind::BadGrid, "need at least three theta nodes");
  // last node strictly below pi/2
  std::size_t last = th.size() - 1;
  while (last > 0 && th[last] >= kHalfPi - 1e-12) --last;
  if (last == 0) fail(ErrorKind::BadGrid, "theta grid has no interior nodes");
  const double top = th[last];
  GapIntegral g;
  g.body = simpson(
      [&](double x) {
        const double c = std::cos(x);
        return (1.0 - eval_lambda(est, x)) / (c * c);
      },
      th.front(), top, 20 * last + 1);
  g.tail = (1.0 - est.lambda()[last]) * std::tan(top);
  return g;
}

BoundReport check_lambda_bound(const Dataset& data, const LambdaEstimate& est) {
  const auto g = lambda_gap_integral(est);
  const double bound = 3.0 * static_cast<double>(data.n()) / std::sqrt(static_cast<double>(data.d()));
  return make_report("integral of (1 - lambda) ds", g.total(), bound, 0.0,
                     "tail closure " + std::to_string(g.tail));
}

BoundReport check_gamma_condition(const LambdaCurve& lambda, std::span<const double> grid) {
  double worst = std::numeric_limits<double>::infinity();
  double where = 0.0;
  for (double th : grid) {
    const double sn = std::sin(th);
    const double gap = lambda(th) - sn * sn;
    if (gap < worst) {
      worst = gap;
      where = th;
    }
  }
  // stated as -min_gap <= 0 with 0.02 slack
  auto r = make_report("separation below the Gaussian reference", -worst, 0.0, 0.02,
                       "min lambda - sin^2 at theta = " + std::to_string(where));
  return r;
}

BoundReport check_gamma_condition(const LambdaEstimate& est) { return check_gamma_condition(LambdaCurve(est), est.theta()); }

std::vector<BoundReport> check_ke_squeeze(const Dataset& data, std::span<const Schedule> schedules,
                                          const LambdaEstimate& est) {
  const LambdaCurve curve(est);
  const double ratio = static_cast<double>(data.n()) / std::sqrt(static_cast<double>(data.d()));
  std::vector<BoundReport> out;
  for (const auto& s : schedules) {
    if (!check_schedule(s).snr_increasing)
      fail(ErrorKind::SnrNotMonotone, "schedule " + s.name() + " has a non-increasing SNR");
    const double M = sobolev_bound(s);
    const auto rep = ke(s, curve);
    out.push_back(make_report(s.name() + ": ke <= cke", rep.ke, rep.cke, 1e-8));
    out.push_back(make_report(s.name() + ": cke - ke <= 6 M^2 n / sqrt(d)", rep.gap, 6.0 * M * M * ratio, 0.05,
                              "M = " + std::to_string(M)));
  }
  return out;
}

}  // namespace kopath
