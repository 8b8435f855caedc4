#include "kopath/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "kopath/error.hpp"
#include "kopath/rng.hpp"

namespace kopath {
namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;
constexpr double kTimeTol = 1e-12;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_time(double t) {
  if (!(t >= -kTimeTol && t <= 1.0 + kTimeTol)) fail(ErrorKind::OutOfRange, "t outside [0, 1]");
  return std::clamp(t, 0.0, 1.0);
}

void check_ascending(std::span<const double> t) {
  if (t.size() < 2) fail(ErrorKind::BadGrid, "time grid needs at least two nodes");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || t[i] < -kTimeTol || t[i] > 1.0 + kTimeTol)
      fail(ErrorKind::BadGrid, "time grid node outside [0, 1]");
    if (i > 0 && !(t[i] > t[i - 1])) fail(ErrorKind::BadGrid, "time grid not strictly ascending");
  }
}

// Second-order differences on a possibly nonuniform grid.
std::vector<double> differentiate(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  std::vector<double> d(n);
  if (n == 2) {
    d[0] = d[1] = (y[1] - y[0]) / (t[1] - t[0]);
    return d;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double h0 = t[i] - t[i - 1], h1 = t[i + 1] - t[i];
    d[i] = (h0 * h0 * y[i + 1] - h1 * h1 * y[i - 1] + (h1 * h1 - h0 * h0) * y[i]) / (h0 * h1 * (h0 + h1));
  }
  {
    const double h0 = t[1] - t[0], h1 = t[2] - t[1];
    d[0] = -(2 * h0 + h1) / (h0 * (h0 + h1)) * y[0] + (h0 + h1) / (h0 * h1) * y[1] -
           h0 / (h1 * (h0 + h1)) * y[2];
  }
  {
    const double h0 = t[n - 2] - t[n - 3], h1 = t[n - 1] - t[n - 2];
    d[n - 1] = (2 * h1 + h0) / (h1 * (h0 + h1)) * y[n - 1] - (h0 + h1) / (h0 * h1) * y[n - 2] +
               h1 / (h0 * (h0 + h1)) * y[n - 3];
  }
  return d;
}

ScheduleValue eval_table(const ScheduleTable& tab, double t) {
  const auto& x = tab.t;
  if (!(t >= x.front() - kTimeTol && t <= x.back() + kTimeTol))
    fail(ErrorKind::OutOfRange, "t outside the tabulated range");
  t = std::clamp(t, x.front(), x.back());
  std::size_t i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), t) - x.begin());
  i = std::clamp<std::size_t>(i, 1, x.size() - 1) - 1;
  const double h = x[i + 1] - x[i], s = (t - x[i]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const double g00 = (6 * s2 - 6 * s) / h, g10 = 3 * s2 - 4 * s + 1, g01 = (-6 * s2 + 6 * s) / h,
               g11 = 3 * s2 - 2 * s;
  auto value = [&](const std::vector<double>& y, const std::vector<double>& dy) {
    return h00 * y[i] + h10 * h * dy[i] + h01 * y[i + 1] + h11 * h * dy[i + 1];
  };
  auto slope = [&](const std::vector<double>& y, const std::vector<double>& dy) {
    return g00 * y[i] + g10 * dy[i] + g01 * y[i + 1] + g11 * dy[i + 1];
  };
  return {value(tab.a, tab.da), value(tab.m, tab.dm), slope(tab.a, tab.da), slope(tab.m, tab.dm)};
}

}  // namespace

// ---- ThetaNetwork ----

ThetaNetwork::ThetaNetwork() : ThetaNetwork(Params{1, 0, 0, 0, 0, 0, 0, 0, 0}) {}

ThetaNetwork::ThetaNetwork(const Params& params) : p_(params) {
  for (double v : p_)
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "theta network weight is not finite");
  phi0_ = raw(0.0);
  span_ = raw(1.0) - phi0_;
}

ThetaNetwork ThetaNetwork::random(Rng& rng) {
  Params p{};
  for (auto& v : p) v = rng.uniform(-1.0, 1.0);
  return ThetaNetwork(p);
}

double ThetaNetwork::raw(double t) const {
  const auto& p = p_;
  double z = p[0] * t + p[1] + p[8];
  for (int k = 0; k < 2; ++k) z += p[6 + k] * (2.0 * sigmoid(p[2 + k] * t + p[4 + k]) - 1.0);
  return sigmoid(z);
}

double ThetaNetwork::raw_derivative(double t) const {
  const auto& p = p_;
  double z = p[0] * t + p[1] + p[8];
  double dz = p[0];
  for (int k = 0; k < 2; ++k) {
    const double g = sigmoid(p[2 + k] * t + p[4 + k]);
    z += p[6 + k] * (2.0 * g - 1.0);
    dz += p[6 + k] * 2.0 * g * (1.0 - g) * p[2 + k];
  }
  const double f = sigmoid(z);
  return f * (1.0 - f) * dz;
}

bool ThetaNetwork::degenerate() const { return !(std::abs(span_) > 1e-12); }

double ThetaNetwork::theta(double t) const {
  if (degenerate()) fail(ErrorKind::NonFinite, "theta network has a flat output");
  return kHalfPi * std::abs(raw(t) - phi0_) / std::abs(span_);
}

double ThetaNetwork::theta_dot(double t) const {
  if (degenerate()) fail(ErrorKind::NonFinite, "theta network has a flat output");
  const double diff = raw(t) - phi0_;
  // at t = 0 the sign is taken from the overall direction
  const double sign = diff == 0.0 ? (span_ > 0 ? 1.0 : -1.0) : (diff > 0 ? 1.0 : -1.0);
  return kHalfPi * sign * raw_derivative(t) / std::abs(span_);
}

// ---- Schedule ----

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::CondOT: return "condot";
    case ScheduleKind::SI: return "si";
    case ScheduleKind::DDPM: return "ddpm";
    case ScheduleKind::Tabulated: return "tabulated";
    case ScheduleKind::KO: return "ko";
  }
  return "unknown";
}

Schedule Schedule::cond_ot() { return Schedule(ScheduleKind::CondOT); }

Schedule Schedule::si() { return Schedule(ScheduleKind::SI); }

Schedule Schedule::ddpm(double beta0, double beta1) {
  if (!(beta0 >= 0.0 && beta1 >= beta0 && std::isfinite(beta1)))
    fail(ErrorKind::OutOfRange, "ddpm needs 0 <= beta0 <= beta1");
  Schedule s(ScheduleKind::DDPM);
  s.beta0_ = beta0;
  s.beta1_ = beta1;
  return s;
}

Schedule Schedule::tabulated(std::vector<double> t, std::vector<double> a, std::vector<double> m) {
  ScheduleTable tab;
  tab.t = std::move(t);
  tab.a = std::move(a);
  tab.m = std::move(m);
  return tabulated(std::move(tab));
}

Schedule Schedule::tabulated(ScheduleTable tab) {
  check_ascending(tab.t);
  const std::size_t n = tab.t.size();
  if (tab.a.size() != n || tab.m.size() != n) fail(ErrorKind::BadGrid, "table columns differ in length");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(tab.a[i]) || !std::isfinite(tab.m[i]))
      fail(ErrorKind::NonFinite, "table value is not finite");
  auto fill = [&](std::vector<double>& d, const std::vector<double>& y) {
    if (d.empty()) {
      d = differentiate(tab.t, y);
      return;
    }
    if (d.size() != n) fail(ErrorKind::BadGrid, "derivative column has the wrong length");
    if (std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); })) return;
    const auto fd = differentiate(tab.t, y);
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(d[i])) d[i] = fd[i];
  };
  fill(tab.da, tab.a);
  fill(tab.dm, tab.m);
  Schedule s(ScheduleKind::Tabulated);
  s.table_ = std::make_shared<const ScheduleTable>(std::move(tab));
  return s;
}

Schedule Schedule::ko(double b, ThetaNetwork net) {
  if (!(b >= 0.0 && b <= 4.0)) fail(ErrorKind::OutOfRange, "b must lie in [0, 4]");
  if (net.degenerate()) fail(ErrorKind::NonFinite, "theta network has a flat output");
  Schedule s(ScheduleKind::KO);
  s.b_ = b;
  s.net_ = std::move(net);
  return s;
}

ScheduleValue Schedule::eval(double t) const {
  if (kind_ == ScheduleKind::Tabulated) return eval_table(*table_, t);
  t = clamp_time(t);
  switch (kind_) {
    case ScheduleKind::CondOT:
      return {t, 1.0 - t, 1.0, -1.0};
    case ScheduleKind::SI: {
      const double w = kHalfPi * t;
      return {std::sin(w), std::cos(w), kHalfPi * std::cos(w), -kHalfPi * std::sin(w)};
    }
    case ScheduleKind::DDPM: {
      const double u = 1.0 - t;
      const double slope = beta1_ - beta0_;
      const double log_xi = -0.25 * slope * u * u - 0.5 * beta0_ * u;
      const double xi = std::exp(log_xi);
      const double m = std::sqrt(-std::expm1(2.0 * log_xi));
      const double da = xi * (0.5 * slope * u + 0.5 * beta0_);
      double dm;
      if (m > 0.0) {
        dm = -xi * da / m;
      } else {
        // limit of -a a'/m as u -> 0
        dm = beta0_ > 0.0 ? -std::numeric_limits<double>::infinity() : -std::sqrt(0.5 * slope);
      }
      return {xi, m, da, dm};
    }
    case ScheduleKind::KO: {
      const double r2 = 1.0 - b_ * t + b_ * t * t;
      const double r = std::sqrt(r2);
      const double dr = b_ * (2.0 * t - 1.0) / (2.0 * r);
      const double th = net_.theta(t), dth = net_.theta_dot(t);
      const double sn = std::sin(th), cs = std::cos(th);
      return {r * sn, r * cs, dr * sn + r * cs * dth, dr * cs - r * sn * dth};
    }
    case ScheduleKind::Tabulated:
      break;
  }
  fail(ErrorKind::Inconsistent, "unhandled schedule kind");
}

std::pair<double, double> ddpm_coeffs(double beta0, double beta1, double t) {
  const auto v = Schedule::ddpm(beta0, beta1).eval(t);
  return {v.a, v.m};
}

PolarPoint to_polar(const Schedule& s, double t) {
  const auto v = s.eval(t);
  const double r = std::hypot(v.a, v.m);
  PolarPoint p;
  p.r = r;
  p.theta = std::atan2(v.a, v.m);
  if (r > 0.0) {
    p.dr = (v.a * v.da + v.m * v.dm) / r;
    p.dtheta = (v.da * v.m - v.a * v.dm) / (r * r);
  }
  return p;
}

AlphaBeta alpha_beta(const Schedule& s, double t) {
  const auto v = s.eval(t);
  if (v.m < 1e-12) fail(ErrorKind::SingularEndpoint, "m(t) vanishes; alpha and beta are undefined");
  const double alpha = v.dm / v.m;
  return {alpha, v.da - v.a * alpha};
}

double snr(const Schedule& s, double t) {
  const auto v = s.eval(t);
  if (v.m == 0.0) return std::numeric_limits<double>::infinity();
  return (v.a * v.a) / (v.m * v.m);
}

std::vector<double> unit_grid(std::size_t n) {
  if (n < 2) fail(ErrorKind::BadGrid, "grid needs at least two nodes");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  g.back() = 1.0;
  return g;
}

Schedule tabulate(const Schedule& s, std::span<const double> grid) {
  check_ascending(grid);
  ScheduleTable tab;
  tab.t.assign(grid.begin(), grid.end());
  for (double& t : tab.t) t = std::clamp(t, 0.0, 1.0);
  tab.a.reserve(grid.size());
  tab.m.reserve(grid.size());
  for (double t : tab.t) {
    const auto v = s.eval(t);
    tab.a.push_back(v.a);
    tab.m.push_back(v.m);
  }
  return Schedule::tabulated(std::move(tab));
}

ScheduleCheck check_schedule(const Schedule& s, std::size_t nodes) {
  ScheduleCheck c;
  c.tolerance = s.kind() == ScheduleKind::DDPM ? 1e-2 : 1e-6;
  const auto v0 = s.eval(0.0), v1 = s.eval(1.0);
  c.boundary_defect = std::max({std::abs(v0.a), std::abs(v0.m - 1.0), std::abs(v1.a - 1.0), std::abs(v1.m)});
  c.min_value = std::numeric_limits<double>::infinity();
  c.snr_increasing = true;
  // the angle atan2(a, m) is a monotone transform of the SNR that stays finite at m = 0
  double prev = -std::numeric_limits<double>::infinity();
  for (double t : unit_grid(nodes)) {
    const auto v = s.eval(t);
    c.min_value = std::min({c.min_value, v.a, v.m});
    const double ang = std::atan2(v.a, v.m);
    if (!(ang > prev)) c.snr_increasing = false;
    prev = ang;
  }
  c.ok = c.boundary_defect <= c.tolerance && c.min_value >= -c.tolerance && c.snr_increasing;
  return c;
}

double sobolev_bound(const Schedule& s, std::size_t nodes, double trim) {
  double M = 0.0;
  for (double t : unit_grid(nodes)) {
    auto v = s.eval(t);
    if (!std::isfinite(v.da) || !std::isfinite(v.dm)) v = s.eval(std::clamp(t, trim, 1.0 - trim));
    M = std::max({M, std::abs(v.a), std::abs(v.m), std::abs(v.da), std::abs(v.dm)});
  }
  return M;
}

void save_schedule(const Schedule& s, const std::filesystem::path& path, std::size_t nodes) {
  nlohmann::json head = {{"kind", s.name()}};
  switch (s.kind()) {
    case ScheduleKind::DDPM:
      head["beta0"] = s.ddpm_betas().first;
      head["beta1"] = s.ddpm_betas().second;
      break;
    case ScheduleKind::KO: {
      head["b"] = s.ko_b();
      const auto& p = s.ko_network().params();
      head["theta_params"] = std::vector<double>(p.begin(), p.end());
      break;
    }
    case ScheduleKind::Tabulated:
      head["table_nodes"] = s.table()->t.size();
      break;
    default:
      break;
  }
  head["nodes"] = nodes;

  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.precision(17);
  out << "# " << head.dump() << '\n' << "t,a,m,da,dm\n";
  for (double t : unit_grid(nodes)) {
    const auto v = s.eval(t);
    out << t << ',' << v.a << ',' << v.m << ',' << v.da << ',' << v.dm << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

Schedule load_schedule(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
    fail(ErrorKind::FormatError, "missing '# {json}' header in " + path.string());
  if (!nlohmann::json::accept(line.substr(2))) fail(ErrorKind::FormatError, "bad schedule header json");
  if (!std::getline(in, line) || line != "t,a,m,da,dm")
    fail(ErrorKind::FormatError, "expected column header t,a,m,da,dm");
  ScheduleTable tab;
  std::vector<double>* cols[] = {&tab.t, &tab.a, &tab.m, &tab.da, &tab.dm};
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t c = 0;
    while (std::getline(ss, field, ',')) {
      if (c >= 5) fail(ErrorKind::FormatError, "line " + std::to_string(lineno) + ": too many fields");
      try {
        std::size_t used = 0;
        cols[c]->push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::logic_error&) {
        fail(ErrorKind::FormatError, "line " + std::to_string(lineno) + ": not a number");
      }
      ++c;
    }
    if (c != 5) fail(ErrorKind::FormatError, "line " + std::to_string(lineno) + ": expected 5 fields");
  }
  return Schedule::tabulated(std::move(tab));
}

}  // namespace kopath
