#include "kopath/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kopath/error.hpp"

namespace kopath {
namespace {

constexpr double kEndpointBand = 1e-9;
constexpr double kGammaFloor = -10.0;

struct Integrands {
  double conditional = 0.0;
  double polar = 0.0;
  double cartesian = 0.0;
  double gamma = 0.0;
  bool flagged = false;
};

Integrands integrands(const Schedule& s, const LambdaCurve& lambda, double t) {
  const auto v = s.eval(t);
  Integrands out;
  out.conditional = v.da * v.da + v.dm * v.dm;
  const double r2 = v.a * v.a + v.m * v.m;
  const double r = std::sqrt(r2);
  const double dr = r > 0.0 ? (v.a * v.da + v.m * v.dm) / r : 0.0;
  const double dth = r2 > 0.0 ? (v.da * v.m - v.a * v.dm) / r2 : 0.0;
  const double th = std::clamp(std::atan2(v.a, v.m), 0.0, kHalfPi);
  out.gamma = gamma(lambda, th, &out.flagged);
  const double ang = r2 * dth * dth;
  // gamma = -inf with a motionless angle contributes nothing
  out.polar = dr * dr + (ang == 0.0 ? 0.0 : ang * out.gamma);
  if (v.m > 0.0) {
    const double beta = v.da - v.a * v.dm / v.m;
    out.cartesian = out.conditional - beta * beta * lambda.complement(th);
  } else {
    out.cartesian = out.polar;
  }
  return out;
}

}  // namespace

double gamma(const LambdaCurve& lambda, double theta, bool* flagged) {
  if (flagged) *flagged = false;
  if (!(theta >= -1e-12 && theta <= kHalfPi + 1e-12)) fail(ErrorKind::OutOfRange, "theta outside [0, pi/2]");
  if (theta >= kHalfPi - kEndpointBand) {
    if (lambda.at_endpoint() >= 1.0 - 1e-9) return 1.0;
    if (flagged) *flagged = true;
    return -std::numeric_limits<double>::infinity();
  }
  const double c = std::cos(theta);
  const double g = 1.0 - lambda.complement(theta) / (c * c);
  if (flagged && g < kGammaFloor) *flagged = true;
  return g;
}

double cke(const Schedule& s, const TrimmedRule& rule) {
  return integrate_unit(
      [&](double t) {
        const auto v = s.eval(t);
        return v.da * v.da + v.dm * v.dm;
      },
      rule);
}

double ke_polar(const Schedule& s, const LambdaCurve& lambda, const TrimmedRule& rule) {
  const double e = integrate_unit([&](double t) { return integrands(s, lambda, t).polar; }, rule);
  if (std::isnan(e)) fail(ErrorKind::NonFinite, "kinetic energy is NaN");
  return e;
}

EnergyReport ke(const Schedule& s, const LambdaCurve& lambda, const TrimmedRule& rule, double rel_tol) {
  EnergyReport rep;
  rep.min_gamma = std::numeric_limits<double>::infinity();
  // one pass per form keeps the node order, and so the rounding, identical to cke()
  rep.cke = cke(s, rule);
  rep.ke = integrate_unit(
      [&](double t) {
        const auto in = integrands(s, lambda, t);
        if (in.flagged) ++rep.gamma_flags;
        rep.min_gamma = std::min(rep.min_gamma, std::max(in.gamma, kGammaFloor));
        return in.polar;
      },
      rule);
  rep.ke_cartesian = integrate_unit([&](double t) { return integrands(s, lambda, t).cartesian; }, rule);
  rep.nodes = std::max<std::size_t>(3, rule.nodes | 1u);
  rep.gap = rep.cke - rep.ke;
  if (!std::isfinite(rep.ke) || !std::isfinite(rep.ke_cartesian))
    fail(ErrorKind::NonFinite, "kinetic energy is not finite");
  const double scale = std::max({std::abs(rep.ke), std::abs(rep.ke_cartesian), 1e-9});
  if (std::abs(rep.ke - rep.ke_cartesian) > rel_tol * scale)
    fail(ErrorKind::Inconsistent, "polar and Cartesian kinetic energies disagree: " +
                                      std::to_string(rep.ke) + " vs " + std::to_string(rep.ke_cartesian));
  return rep;
}

}  // namespace kopath
