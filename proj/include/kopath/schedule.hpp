#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kopath {

class Rng;

// Monotone-ish squashing curve used to parameterize the angle of a path:
//   phi(t) = sig(w t + c + sum_k v_k (2 sig(u_k t + e_k) - 1) + h)
//   angle(t) = (pi/2) |phi(t) - phi(0)| / |phi(1) - phi(0)|
// so angle(0) = 0 and angle(1) = pi/2 regardless of the weights.
class ThetaNetwork {
 public:
  static constexpr std::size_t kParams = 9;
  // layout: w, c, u0, u1, e0, e1, v0, v1, h
  using Params = std::array<double, kParams>;

  ThetaNetwork();  // the identity-like default: w = 1, everything else 0
  explicit ThetaNetwork(const Params& params);
  static ThetaNetwork random(Rng& rng);  // weights uniform in [-1, 1]

  double raw(double t) const;
  double raw_derivative(double t) const;
  double theta(double t) const;
  double theta_dot(double t) const;
  // |phi(1) - phi(0)| below 1e-12 makes the normalization meaningless.
  bool degenerate() const;
  const Params& params() const noexcept { return p_; }

 private:
  Params p_{};
  double phi0_ = 0.0;
  double span_ = 0.0;  // phi(1) - phi(0)
};

enum class ScheduleKind { CondOT, SI, DDPM, Tabulated, KO };

std::string to_string(ScheduleKind kind);

struct ScheduleValue {
  double a = 0.0, m = 0.0, da = 0.0, dm = 0.0;
};

struct PolarPoint {
  double r = 0.0, theta = 0.0, dr = 0.0, dtheta = 0.0;
};

struct AlphaBeta {
  double alpha = 0.0, beta = 0.0;
};

struct ScheduleTable {
  std::vector<double> t, a, m, da, dm;
};

// A path (a_t, m_t) on [0, 1]: t = 0 is noise (a = 0, m = 1), t = 1 data.
// Immutable value type; copies share tabulated storage.
class Schedule {
 public:
  static Schedule cond_ot();
  static Schedule si();
  static Schedule ddpm(double beta0 = 0.1, double beta1 = 20.0);
  // Derivatives by central differences (second-order one-sided at the ends).
  static Schedule tabulated(std::vector<double> t, std::vector<double> a, std::vector<double> m);
  // Caller-supplied derivatives; non-finite entries fall back to differences.
  static Schedule tabulated(ScheduleTable table);
  // r = sqrt(1 - b t + b t^2) with the angle from `net`.
  static Schedule ko(double b, ThetaNetwork net);

  ScheduleKind kind() const noexcept { return kind_; }
  std::string name() const { return to_string(kind_); }

  // OutOfRange for t outside [0, 1] (or outside the table's span).
  ScheduleValue eval(double t) const;
  double a(double t) const { return eval(t).a; }
  double m(double t) const { return eval(t).m; }

  std::pair<double, double> ddpm_betas() const { return {beta0_, beta1_}; }
  double ko_b() const noexcept { return b_; }
  const ThetaNetwork& ko_network() const noexcept { return net_; }
  // Null unless kind() == Tabulated.
  const ScheduleTable* table() const noexcept { return table_.get(); }

 private:
  explicit Schedule(ScheduleKind kind) : kind_(kind) {}

  ScheduleKind kind_;
  double beta0_ = 0.0, beta1_ = 0.0;
  double b_ = 0.0;
  ThetaNetwork net_;
  std::shared_ptr<const ScheduleTable> table_;
};

// (a, m) of the variance-preserving diffusion path with linear noise rate
// beta(s) = beta0 + (beta1 - beta0) s, run in forward time.
std::pair<double, double> ddpm_coeffs(double beta0, double beta1, double t);

// r = |(a, m)|, theta = atan2(a, m), with their time derivatives.
PolarPoint to_polar(const Schedule& s, double t);

// alpha = m'/m, beta = a' - a m'/m. SingularEndpoint when m(t) < 1e-12.
AlphaBeta alpha_beta(const Schedule& s, double t);

// a^2 / m^2 (infinite at m = 0).
double snr(const Schedule& s, double t);

// Samples s on `grid` (ascending, inside [0, 1]; BadGrid otherwise).
Schedule tabulate(const Schedule& s, std::span<const double> grid);

// n equispaced points covering [0, 1] inclusive.
std::vector<double> unit_grid(std::size_t n);

struct ScheduleCheck {
  double boundary_defect = 0.0;  // max deviation of a(0), a(1), m(0), m(1) from 0/1/1/0
  double min_value = 0.0;        // min of a and m over the grid
  bool snr_increasing = false;
  double tolerance = 0.0;        // 1e-6, or 1e-2 for DDPM
  bool ok = false;
};

ScheduleCheck check_schedule(const Schedule& s, std::size_t nodes = 1001);

// max of sup|a|, sup|a'|, sup|m|, sup|m'| on an equispaced grid. Nodes whose
// derivatives are infinite (DDPM at t = 1) are measured `trim` inside [0, 1].
double sobolev_bound(const Schedule& s, std::size_t nodes = 1001, double trim = 1e-4);

// CSV: a "# {json}" line with kind and parameters, then t,a,m,da,dm rows.
void save_schedule(const Schedule& s, const std::filesystem::path& path, std::size_t nodes = 1001);
// Reads the CSV back as a Tabulated schedule with the stored derivatives.
Schedule load_schedule(const std::filesystem::path& path);

}  // namespace kopath
