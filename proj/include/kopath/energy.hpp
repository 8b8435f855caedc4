#pragma once

#include <cstddef>

#include "kopath/quadrature.hpp"
#include "kopath/schedule.hpp"
#include "kopath/separation.hpp"

namespace kopath {

struct EnergyReport {
  double cke = 0.0;           // integral of a'^2 + m'^2
  double ke = 0.0;            // polar form: r'^2 + r^2 theta'^2 gamma(theta)
  double ke_cartesian = 0.0;  // cke - integral of beta^2 (1 - lambda)
  double gap = 0.0;           // cke - ke
  std::size_t nodes = 0;
  std::size_t gamma_flags = 0;  // quadrature nodes where gamma < -10 or undefined
  double min_gamma = 0.0;       // clamped below at -10 for reporting
};

// Weight of the angular kinetic term, 1 - (1 - lambda(tan theta)) / cos^2 theta.
// Within 1e-9 of pi/2 the limit is used: 1 when lambda(pi/2) = 1 (to 1e-9), otherwise
// -inf with *flagged set. Values below -10 also set *flagged.
double gamma(const LambdaCurve& lambda, double theta, bool* flagged = nullptr);

double cke(const Schedule& s, const TrimmedRule& rule = {});

// Kinetic energy of the marginal path, in both the polar and the Cartesian
// form. Throws Inconsistent when they differ by more than rel_tol.
EnergyReport ke(const Schedule& s, const LambdaCurve& lambda, const TrimmedRule& rule = {},
                double rel_tol = 1e-3);

// Polar form only, skipping the cross-check; used inside optimizers.
double ke_polar(const Schedule& s, const LambdaCurve& lambda, const TrimmedRule& rule = {});

}  // namespace kopath
