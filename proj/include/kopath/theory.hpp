#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kopath/dataset.hpp"
#include "kopath/schedule.hpp"
#include "kopath/separation.hpp"

namespace kopath {

// One numeric instance of an inequality "value <= bound".
struct BoundReport {
  std::string quantity;
  double value = 0.0;
  double bound = 0.0;
  double tolerance = 0.0;
  double margin = 0.0;  // bound + tolerance - value
  bool pass = false;
  std::string note;
};

BoundReport make_report(std::string quantity, double value, double bound, double tolerance, std::string note = {});

// eta(t) = E_z 1 / (1 + exp(t^2/2 - t z)), z ~ N(0, 1). Evaluated as
// exp(-t^2/8) E[1 / (2 cosh(t z / 2))] (a change of measure centering the
// integrand) with Gauss-Hermite quadrature.
double eta(double t, std::size_t order = 200);

// min{1, sqrt(2/pi) (2/t) exp(-t^2/8)}, an upper bound on eta.
double eta_bound(double t);

// Integral of eta over [0, 40] by Simpson with 4001 nodes and again with 8001;
// reported against 3, the refinement change goes in the note.
BoundReport check_eta_integral();
// |Simpson(4001) - Simpson(8001)| from the same computation.
double eta_integral_refinement();

struct GapIntegral {
  double body = 0.0;  // integral of 1 - lambda over s in [0, tan(theta_last)]
  double tail = 0.0;  // (1 - lambda(theta_last)) * tan(theta_last)
  double total() const { return body + tail; }
};

// integral over s in [0, inf) of 1 - lambda(s), via s = tan(theta) up to the last
// node below pi/2, with the rest closed by a tail term that is exact for
// 1 - lambda ~ 1/s^2 and conservative for faster decay.
GapIntegral lambda_gap_integral(const LambdaEstimate& est);

// integral of (1 - lambda) ds against 3 n / sqrt(d).
BoundReport check_lambda_bound(const Dataset& data, const LambdaEstimate& est);

// min over the grid of lambda(tan theta) - sin^2(theta); pass when >= -0.02.
BoundReport check_gamma_condition(const LambdaCurve& lambda, std::span<const double> grid);
BoundReport check_gamma_condition(const LambdaEstimate& est);

// For each schedule: ke <= cke (tolerance 1e-8), and cke - ke <= 6 M^2 n / sqrt(d)
// (tolerance 0.05), with M = sobolev_bound(schedule). SnrNotMonotone if a
// schedule's SNR is not strictly increasing. Two reports per schedule.
std::vector<BoundReport> check_ke_squeeze(const Dataset& data, std::span<const Schedule> schedules,
                                          const LambdaEstimate& est);

}  // namespace kopath
