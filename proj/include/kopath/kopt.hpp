#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kopath/quadrature.hpp"
#include "kopath/schedule.hpp"
#include "kopath/separation.hpp"

namespace kopath {

enum class KOMethod { Direct, Shooting };

std::string to_string(KOMethod method);
KOMethod parse_method(const std::string& name);  // "direct" | "shoot" | "shooting"

// Angle trajectory of the radial family r = sqrt(1 - b t + b t^2).
struct ThetaCurve {
  double b = 0.0;
  std::vector<double> t;          // t0, t0 + h, ...
  std::vector<double> theta;      // integrated angle
  std::vector<double> theta_dot;  // right-hand side of the angle equation at each node
  bool reached = false;           // theta hit pi/2 at or before t = 1
  double reach_time = 1.0;        // first time theta hit pi/2 (1 if it did not)
  double theta_end = 0.0;         // theta at t = 1, capped at pi/2
};

struct ShootOptions {
  double t0 = 1e-3;
  double step = 1e-4;
  double tol = 1e-6;      // on theta(1) - pi/2
  double margin = 1e-6;   // the bracket is (margin, 4 - margin)
  std::size_t table_nodes = 20001;
};

struct KOSolution {
  double b = 2.0;
  ThetaNetwork::Params theta_params{};  // meaningful for the direct method
  double final_energy = 0.0;
  KOMethod method = KOMethod::Direct;
  Schedule schedule = Schedule::cond_ot();
  std::vector<double> trace;  // best objective seen after each iteration (direct)
  ThetaCurve curve;           // filled by shooting
};

struct DirectOptions {
  std::size_t iters = 1500;
  double lr = 0.05;
  double lr_floor = 1e-4;  // cosine annealing end point
  double fd_step = 1e-4;
  std::size_t restarts = 4;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  TrimmedRule objective_rule{401, 1e-4};
};

// Minimizes the polar kinetic energy over b (kept in (0, 4) through
// 4 * sigmoid) and the angle network, with finite-difference gradients and
// Adam. NonFinite if the objective turns NaN.
KOSolution optimize_direct(const LambdaCurve& lambda, const DirectOptions& opts = {});

// RK4 on theta' = sqrt((b - b^2/4) / gamma(theta)) / r^2 from t0, with theta(t0)
// from the exact separable solution of the same equation. GammaNonpositive if
// gamma <= 1e-8 is met along the way.
ThetaCurve solve_theta_ode(const LambdaCurve& lambda, double b, const ShootOptions& opts = {});

// Bisection on b for theta(1) = pi/2. NoBracket if the residual keeps its sign.
KOSolution shoot_b(const LambdaCurve& lambda, const ShootOptions& opts = {});

// r^4 theta'^2 gamma(theta) along a shooting curve, with theta' by central
// differences of the stored trajectory (interior nodes only).
std::vector<double> conserved_quantity(const ThetaCurve& curve, const LambdaCurve& lambda);

// ko.json: {b, theta_params, final_energy, method, tabulation{t, a, m, da, dm}}
// with a 1001-point tabulation.
void save_solution(const KOSolution& sol, const std::filesystem::path& path);
KOSolution load_solution(const std::filesystem::path& path);

}  // namespace kopath
