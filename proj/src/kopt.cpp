#include "kopath/kopt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "kopath/energy.hpp"
#include "kopath/error.hpp"
#include "kopath/parallel.hpp"
#include "kopath/rng.hpp"

namespace kopath {
namespace {

constexpr std::size_t kDims = 1 + ThetaNetwork::kParams;
using Point = std::array<double, kDims>;

constexpr double kGammaMin = 1e-8;
// below this angle a vanishing gamma is expected (zero-mean data has gamma(0) = 0)
constexpr double kGammaGuard = 1e-2;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double radius_sq(double b, double t) { return 1.0 - b * t + b * t * t; }

ThetaNetwork::Params net_params(const Point& x) {
  ThetaNetwork::Params p{};
  std::copy(x.begin() + 1, x.end(), p.begin());
  return p;
}

double direct_objective(const LambdaCurve& lambda, const Point& x, const TrimmedRule& rule) {
  const double b = 4.0 * sigmoid(x[0]);
  for (double v : x)
    if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  const ThetaNetwork net(net_params(x));
  if (net.degenerate()) return std::numeric_limits<double>::infinity();
  return integrate_unit(
      [&](double t) {
        const double r2 = radius_sq(b, t);
        const double dr = b * (2.0 * t - 1.0) / (2.0 * std::sqrt(r2));
        const double dth = net.theta_dot(t);
        const double th = std::clamp(net.theta(t), 0.0, kHalfPi);
        const double ang = r2 * dth * dth;
        return dr * dr + (ang == 0.0 ? 0.0 : ang * gamma(lambda, th));
      },
      rule);
}

struct RestartResult {
  double best = std::numeric_limits<double>::infinity();
  Point x{};
  std::vector<double> trace;
};

RestartResult run_restart(const LambdaCurve& lambda, const DirectOptions& opts, std::size_t index) {
  Rng rng = Rng(opts.seed).split(index);
  Point x{};
  for (int attempt = 0;; ++attempt) {
    x[0] = 0.0;  // b = 2
    for (std::size_t i = 1; i < kDims; ++i) x[i] = rng.uniform(-1.0, 1.0);
    if (!ThetaNetwork(net_params(x)).degenerate()) break;
    if (attempt > 100) fail(ErrorKind::NonFinite, "could not draw a usable theta network");
  }
  auto f = [&](const Point& p) { return direct_objective(lambda, p, opts.objective_rule); };

  RestartResult res;
  double fx = f(x);
  if (std::isnan(fx)) fail(ErrorKind::NonFinite, "kinetic energy objective is NaN");
  res.best = fx;
  res.x = x;
  res.trace.reserve(opts.iters);

  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Point m1{}, m2{}, grad{};
  for (std::size_t k = 0; k < opts.iters; ++k) {
    const double progress = static_cast<double>(k) / static_cast<double>(opts.iters);
    const double lr = opts.lr_floor + 0.5 * (opts.lr - opts.lr_floor) * (1.0 + std::cos(std::numbers::pi * progress));
    for (std::size_t i = 0; i < kDims; ++i) {
      Point up = x, down = x;
      up[i] += opts.fd_step;
      down[i] -= opts.fd_step;
      const double fu = f(up), fd = f(down);
      if (std::isnan(fu) || std::isnan(fd)) fail(ErrorKind::NonFinite, "kinetic energy objective is NaN");
      grad[i] = std::isfinite(fu) && std::isfinite(fd) ? (fu - fd) / (2.0 * opts.fd_step) : 0.0;
    }
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(k + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(k + 1));
    for (std::size_t i = 0; i < kDims; ++i) {
      m1[i] = b1 * m1[i] + (1 - b1) * grad[i];
      m2[i] = b2 * m2[i] + (1 - b2) * grad[i] * grad[i];
      x[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
    }
    fx = f(x);
    if (std::isnan(fx)) fail(ErrorKind::NonFinite, "kinetic energy objective is NaN");
    if (fx < res.best) {
      res.best = fx;
      res.x = x;
    }
    res.trace.push_back(res.best);
  }
  return res;
}

// Cumulative integral of sqrt(gamma) over theta: the angle equation is
// separable, d/dt G(theta) = sqrt(C) / r^2.
struct GammaTable {
  std::vector<double> theta, cum, gamma;

  GammaTable(const LambdaCurve& lambda, std::size_t nodes) {
    nodes = std::max<std::size_t>(nodes, 3);
    theta.resize(nodes);
    cum.resize(nodes);
    gamma.resize(nodes);
    double prev = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
      theta[i] = kHalfPi * static_cast<double>(i) / static_cast<double>(nodes - 1);
      gamma[i] = kopath::gamma(lambda, theta[i]);
      const double root = std::sqrt(std::max(gamma[i], 0.0));
      cum[i] = i == 0 ? 0.0 : cum[i - 1] + 0.5 * (theta[i] - theta[i - 1]) * (root + prev);
      prev = root;
    }
    theta.back() = kHalfPi;
  }

  // smallest theta with G(theta) = target, or pi/2 when the target is out of reach
  double invert(double target) const {
    if (target <= 0.0) return 0.0;
    if (target >= cum.back()) return kHalfPi;
    const auto it = std::lower_bound(cum.begin(), cum.end(), target);
    const std::size_t i = static_cast<std::size_t>(it - cum.begin());
    const double w = (target - cum[i - 1]) / (cum[i] - cum[i - 1]);
    return theta[i - 1] + w * (theta[i] - theta[i - 1]);
  }

  void check_range(double lo, double hi) const {
    for (std::size_t i = 0; i + 1 < theta.size(); ++i) {
      if (theta[i] < std::max(lo, kGammaGuard) || theta[i] > hi) continue;
      if (!(gamma[i] > kGammaMin))
        fail(ErrorKind::GammaNonpositive,
             "gamma(" + std::to_string(theta[i]) + ") = " + std::to_string(gamma[i]) + " <= 1e-8");
    }
  }
};

// G(theta(t)) for the radial family: atan(b (2t - 1) / q) + atan(b / q), q = sqrt(b (4 - b))
double separable_target(double b, double t) {
  const double q = std::sqrt(b * (4.0 - b));
  return std::atan(b * (2.0 * t - 1.0) / q) + std::atan(b / q);
}

double rhs(const LambdaCurve& lambda, double b, double t, double theta) {
  const double th = std::clamp(theta, 0.0, kHalfPi);
  double g = gamma(lambda, th);
  if (!(g > kGammaMin)) {
    if (th >= kGammaGuard)
      fail(ErrorKind::GammaNonpositive,
           "gamma(" + std::to_string(th) + ") = " + std::to_string(g) + " <= 1e-8");
    g = kGammaMin;
  }
  const double C = b - 0.25 * b * b;
  return std::sqrt(C / g) / radius_sq(b, t);
}

ThetaCurve integrate(const LambdaCurve& lambda, const GammaTable& table, double b, const ShootOptions& opts) {
  if (!(b > 0.0 && b < 4.0)) fail(ErrorKind::OutOfRange, "b must lie in (0, 4)");
  if (!(opts.t0 > 0.0 && opts.t0 < 1.0 && opts.step > 0.0)) fail(ErrorKind::OutOfRange, "bad integration settings");
  ThetaCurve c;
  c.b = b;
  const double theta0 = table.invert(separable_target(b, opts.t0));
  // the stretch below theta0 is covered by the separable start; if even that
  // overshoots, gamma never became large enough to slow the angle down
  table.check_range(theta0 < kHalfPi ? theta0 : 0.0, table.invert(separable_target(b, 1.0)));

  c.t.push_back(opts.t0);
  c.theta.push_back(theta0);
  if (theta0 >= kHalfPi) {
    c.theta_dot.push_back(0.0);
    c.reached = true;
    c.reach_time = opts.t0;
    c.theta_end = kHalfPi;
    return c;
  }
  c.theta_dot.push_back(rhs(lambda, b, opts.t0, theta0));

  const auto steps = static_cast<std::size_t>(std::ceil((1.0 - opts.t0) / opts.step - 1e-6));
  double th = theta0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = opts.t0 + static_cast<double>(k) * opts.step;
    const double t_next = k + 1 == steps ? 1.0 : opts.t0 + static_cast<double>(k + 1) * opts.step;
    const double h = t_next - t;
    const double k1 = rhs(lambda, b, t, th);
    const double k2 = rhs(lambda, b, t + 0.5 * h, th + 0.5 * h * k1);
    const double k3 = rhs(lambda, b, t + 0.5 * h, th + 0.5 * h * k2);
    const double k4 = rhs(lambda, b, t_next, th + h * k3);
    const double next = th + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (next >= kHalfPi) {
      const double hit = t + h * (kHalfPi - th) / (next - th);
      c.t.push_back(std::min(hit, t_next));
      c.theta.push_back(kHalfPi);
      c.theta_dot.push_back(rhs(lambda, b, hit, kHalfPi));
      c.reached = true;
      c.reach_time = c.t.back();
      c.theta_end = kHalfPi;
      return c;
    }
    th = next;
    c.t.push_back(t_next);
    c.theta.push_back(th);
    c.theta_dot.push_back(rhs(lambda, b, t_next, th));
  }
  c.theta_end = th;
  return c;
}

// theta(1) - pi/2 while the angle falls short. Once it reaches pi/2 early the
// overshoot is measured by the separable invariant left over after the hit,
// which keeps the residual monotone in b (the hit time itself is not).
double residual(const ThetaCurve& c) {
  if (c.reached) return separable_target(c.b, 1.0) - separable_target(c.b, c.reach_time);
  return c.theta_end - kHalfPi;
}

double curve_theta(const ThetaCurve& c, const GammaTable& table, double t) {
  if (t <= c.t.front()) return table.invert(separable_target(c.b, t));
  if (t >= c.t.back()) return c.reached ? kHalfPi : c.theta.back();
  const auto it = std::upper_bound(c.t.begin(), c.t.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - c.t.begin());
  const double w = (t - c.t[i - 1]) / (c.t[i] - c.t[i - 1]);
  return c.theta[i - 1] + w * (c.theta[i] - c.theta[i - 1]);
}

Schedule curve_schedule(const ThetaCurve& c, const GammaTable& table, const LambdaCurve& lambda) {
  ScheduleTable tab;
  auto push = [&](double t, double th, double dth) {
    const double r2 = radius_sq(c.b, t), r = std::sqrt(r2);
    const double dr = c.b * (2.0 * t - 1.0) / (2.0 * r);
    const double sn = std::sin(th), cs = std::cos(th);
    tab.t.push_back(t);
    tab.a.push_back(r * sn);
    tab.m.push_back(r * cs);
    tab.da.push_back(dr * sn + r * cs * dth);
    tab.dm.push_back(dr * cs - r * sn * dth);
  };
  // the stretch before t0 follows the separable solution
  constexpr int kLead = 32;
  for (int k = 0; k < kLead; ++k) {
    const double t = c.t.front() * static_cast<double>(k) / kLead;
    const double th = table.invert(separable_target(c.b, t));
    push(t, th, k == 0 ? std::numeric_limits<double>::quiet_NaN() : rhs(lambda, c.b, t, th));
  }
  for (std::size_t i = 0; i < c.t.size(); ++i) {
    const bool done = c.reached && i + 1 == c.t.size();
    push(c.t[i], c.theta[i], done ? 0.0 : c.theta_dot[i]);
  }
  if (tab.t.back() < 1.0) {
    // reached pi/2 early: hold there
    push(1.0, c.reached ? kHalfPi : c.theta.back(), 0.0);
  }
  tab.t.back() = 1.0;
  return Schedule::tabulated(std::move(tab));
}

double curve_energy(const ThetaCurve& c, const GammaTable& table, const LambdaCurve& lambda) {
  return integrate_unit(
      [&](double t) {
        const double r2 = radius_sq(c.b, t);
        const double dr = c.b * (2.0 * t - 1.0) / (2.0 * std::sqrt(r2));
        const double th = curve_theta(c, table, t);
        if (th >= kHalfPi) return dr * dr;
        const double dth = rhs(lambda, c.b, t, th);
        return dr * dr + r2 * dth * dth * gamma(lambda, th);
      },
      TrimmedRule{});
}

nlohmann::json finite_or_null(const std::vector<double>& v) {
  auto out = nlohmann::json::array();
  for (double x : v) {
    if (std::isfinite(x)) out.push_back(x);
    else out.push_back(nullptr);
  }
  return out;
}

std::vector<double> read_column(const nlohmann::json& arr) {
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& x : arr) out.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  return out;
}

}  // namespace

std::string to_string(KOMethod method) { return method == KOMethod::Direct ? "direct" : "shoot"; }

KOMethod parse_method(const std::string& name) {
  if (name == "direct") return KOMethod::Direct;
  if (name == "shoot" || name == "shooting") return KOMethod::Shooting;
  fail(ErrorKind::FormatError, "unknown method '" + name + "'");
}

KOSolution optimize_direct(const LambdaCurve& lambda, const DirectOptions& opts) {
  if (opts.restarts == 0) fail(ErrorKind::OutOfRange, "need at least one restart");
  std::vector<RestartResult> results(opts.restarts);
  parallel_for(opts.restarts, resolve_threads(opts.threads), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) results[r] = run_restart(lambda, opts, r);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r)
    if (results[r].best < results[best].best) best = r;
  const auto& win = results[best];
  if (!std::isfinite(win.best)) fail(ErrorKind::NonFinite, "no restart produced a finite energy");

  KOSolution sol;
  sol.method = KOMethod::Direct;
  sol.b = 4.0 * sigmoid(win.x[0]);
  sol.theta_params = net_params(win.x);
  sol.schedule = Schedule::ko(sol.b, ThetaNetwork(sol.theta_params));
  sol.final_energy = direct_objective(lambda, win.x, TrimmedRule{});
  sol.trace = win.trace;
  return sol;
}

ThetaCurve solve_theta_ode(const LambdaCurve& lambda, double b, const ShootOptions& opts) {
  const GammaTable table(lambda, opts.table_nodes);
  return integrate(lambda, table, b, opts);
}

KOSolution shoot_b(const LambdaCurve& lambda, const ShootOptions& opts) {
  const GammaTable table(lambda, opts.table_nodes);
  double lo = opts.margin, hi = 4.0 - opts.margin;
  ThetaCurve c_lo = integrate(lambda, table, lo, opts);
  ThetaCurve c_hi = integrate(lambda, table, hi, opts);
  double r_lo = residual(c_lo), r_hi = residual(c_hi);
  if (!(r_lo < 0.0 && r_hi >= 0.0))
    fail(ErrorKind::NoBracket, "theta(1) - pi/2 keeps its sign on the bracket: " + std::to_string(r_lo) +
                                   ", " + std::to_string(r_hi));

  ThetaCurve best = std::abs(r_lo) < std::abs(r_hi) ? c_lo : c_hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    ThetaCurve c = integrate(lambda, table, mid, opts);
    const double r = residual(c);
    if (r < r_lo - 1e-12 || r > r_hi + 1e-12)
      fail(ErrorKind::Inconsistent, "theta(1) is not monotone in b near b = " + std::to_string(mid));
    best = c;
    if (!c.reached && std::abs(r) <= opts.tol) break;
    if (r < 0.0) {
      lo = mid;
      r_lo = r;
    } else {
      hi = mid;
      r_hi = r;
    }
    if (hi - lo < 1e-13) break;
  }

  KOSolution sol;
  sol.method = KOMethod::Shooting;
  sol.b = best.b;
  sol.schedule = curve_schedule(best, table, lambda);
  sol.final_energy = curve_energy(best, table, lambda);
  sol.curve = std::move(best);
  return sol;
}

std::vector<double> conserved_quantity(const ThetaCurve& c, const LambdaCurve& lambda) {
  std::vector<double> out;
  const std::size_t n = c.t.size();
  const std::size_t last = c.reached ? n - 1 : n;  // the clipped final node is not a regular step
  for (std::size_t i = 1; i + 1 < last; ++i) {
    const double h0 = c.t[i] - c.t[i - 1], h1 = c.t[i + 1] - c.t[i];
    const double d = (h0 * h0 * c.theta[i + 1] - h1 * h1 * c.theta[i - 1] + (h1 * h1 - h0 * h0) * c.theta[i]) /
                     (h0 * h1 * (h0 + h1));
    const double r2 = radius_sq(c.b, c.t[i]);
    out.push_back(r2 * r2 * d * d * gamma(lambda, std::min(c.theta[i], kHalfPi)));
  }
  return out;
}

void save_solution(const KOSolution& sol, const std::filesystem::path& path) {
  nlohmann::json j;
  j["b"] = sol.b;
  j["method"] = to_string(sol.method);
  j["final_energy"] = sol.final_energy;
  if (sol.method == KOMethod::Direct)
    j["theta_params"] = std::vector<double>(sol.theta_params.begin(), sol.theta_params.end());
  else
    j["theta_params"] = nlohmann::json::array();
  ScheduleTable tab;
  for (double t : unit_grid(1001)) {
    const auto v = sol.schedule.eval(t);
    tab.t.push_back(t);
    tab.a.push_back(v.a);
    tab.m.push_back(v.m);
    tab.da.push_back(v.da);
    tab.dm.push_back(v.dm);
  }
  j["tabulation"] = {{"t", tab.t},
                     {"a", finite_or_null(tab.a)},
                     {"m", finite_or_null(tab.m)},
                     {"da", finite_or_null(tab.da)},
                     {"dm", finite_or_null(tab.dm)}};
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

KOSolution load_solution(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
  KOSolution sol;
  try {
    const auto j = nlohmann::json::parse(in);
    sol.b = j.at("b").get<double>();
    sol.method = parse_method(j.at("method").get<std::string>());
    sol.final_energy = j.at("final_energy").get<double>();
    const auto params = j.at("theta_params").get<std::vector<double>>();
    if (sol.method == KOMethod::Direct) {
      if (params.size() != ThetaNetwork::kParams)
        fail(ErrorKind::FormatError, "theta_params must hold " + std::to_string(ThetaNetwork::kParams) + " values");
      std::copy(params.begin(), params.end(), sol.theta_params.begin());
      sol.schedule = Schedule::ko(sol.b, ThetaNetwork(sol.theta_params));
    } else {
      const auto& tj = j.at("tabulation");
      ScheduleTable tab;
      tab.t = read_column(tj.at("t"));
      tab.a = read_column(tj.at("a"));
      tab.m = read_column(tj.at("m"));
      tab.da = read_column(tj.at("da"));
      tab.dm = read_column(tj.at("dm"));
      sol.schedule = Schedule::tabulated(std::move(tab));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, std::string("bad solution file: ") + e.what());
  }
  return sol;
}

}  // namespace kopath
