#include "kopath/separation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "kopath/error.hpp"
#include "kopath/parallel.hpp"
#include "kopath/quadrature.hpp"
#include "kopath/rng.hpp"

namespace kopath {
namespace {

constexpr double kEndpointTol = 1e-12;
// lambda(pi/2) is a sum of squared norms divided by n d and lands within a few ulps of 1
constexpr double kUnitTol = 1e-9;
constexpr double kThetaCap = kHalfPi - 1e-9;
// exp(-40) is below double epsilon relative to the leading weight
constexpr double kLogitCutoff = -40.0;

bool near_top(double theta) { return theta >= kHalfPi - kEndpointTol; }

void check_grid(std::span<const double> grid) {
  if (grid.size() < 2) fail(ErrorKind::BadGrid, "theta grid needs at least two nodes");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double t = grid[i];
    if (!std::isfinite(t) || t < 0.0 || t > kHalfPi + kEndpointTol)
      fail(ErrorKind::BadGrid, "theta grid node outside [0, pi/2]");
    if (i > 0 && !(t > grid[i - 1])) fail(ErrorKind::BadGrid, "theta grid not strictly ascending");
  }
}

}  // namespace

std::vector<double> default_theta_grid(std::size_t nodes) {
  if (nodes < 2) fail(ErrorKind::BadGrid, "theta grid needs at least two nodes");
  std::vector<double> grid(nodes);
  for (std::size_t i = 0; i < nodes; ++i)
    grid[i] = kHalfPi * static_cast<double>(i) / static_cast<double>(nodes - 1);
  grid.back() = kHalfPi;
  return grid;
}

double scale_of_theta(double theta) { return std::tan(std::min(theta, kThetaCap)); }

std::vector<double> posterior_weights(const Dataset& data, std::span<const double> x, double s) {
  if (x.size() != data.d()) fail(ErrorKind::BadShape, "query point dimension mismatch");
  const std::size_t n = data.n();
  std::vector<double> w(n);
  if (s == 0.0) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
    return w;
  }
  if (!std::isfinite(s) || s < 0.0) fail(ErrorKind::OutOfRange, "signal-to-noise must be finite and >= 0");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = data.row(i);
    double sq = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) sq += (xi[c] - x[c]) * (xi[c] - x[c]);
    w[i] = -0.5 * s * s * sq;
    mx = std::max(mx, w[i]);
  }
  double total = 0.0;
  for (auto& v : w) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : w) v /= total;
  return w;
}

LambdaEstimate::LambdaEstimate(std::vector<double> theta, std::vector<double> lambda,
                               std::size_t n_data, std::size_t k_noise, std::uint64_t seed)
    : theta_(std::move(theta)), lambda_(std::move(lambda)), n_data_(n_data), k_noise_(k_noise), seed_(seed) {
  check_grid(theta_);
  if (lambda_.size() != theta_.size()) fail(ErrorKind::BadGrid, "theta and lambda differ in length");
  for (double v : lambda_)
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "lambda value is not finite");
  complement_form_ = !near_top(theta_.back()) || lambda_.back() >= 1.0 - kUnitTol;
  if (!complement_form_) {
    spline_ = CubicSpline(theta_, lambda_);
    return;
  }
  std::vector<double> q(theta_.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (near_top(theta_[i])) {
      q[i] = 0.0;
    } else {
      const double c = std::cos(theta_[i]);
      q[i] = (1.0 - lambda_[i]) / (c * c);
    }
  }
  spline_ = CubicSpline(theta_, q);
}

double LambdaEstimate::value(double theta) const {
  const auto it = std::lower_bound(theta_.begin(), theta_.end(), theta);
  if (it != theta_.end() && *it == theta) return lambda_[static_cast<std::size_t>(it - theta_.begin())];
  if (complement_form_) return 1.0 - complement(theta);
  return spline_(theta);
}

double LambdaEstimate::complement(double theta) const {
  const auto it = std::lower_bound(theta_.begin(), theta_.end(), theta);
  if (it != theta_.end() && *it == theta) return 1.0 - lambda_[static_cast<std::size_t>(it - theta_.begin())];
  if (!complement_form_) return 1.0 - spline_(theta);
  if (theta >= kHalfPi) return 0.0;
  const double c = std::cos(theta);
  return std::max(spline_(theta), 0.0) * c * c;
}

LambdaEstimate estimate_lambda(const Dataset& data, std::span<const double> theta_grid,
                               std::size_t k, std::uint64_t seed, unsigned threads) {
  check_grid(theta_grid);
  if (k == 0) fail(ErrorKind::BadShape, "need at least one noise draw");
  const std::size_t n = data.n(), d = data.d(), nodes = theta_grid.size();
  const Matrix& X = data.points();
  const double* xs = X.data();

  std::vector<double> half_norms(n);
  for (std::size_t i = 0; i < n; ++i) half_norms[i] = 0.5 * X.row(static_cast<Eigen::Index>(i)).squaredNorm();
  const double centroid_sq = X.colwise().mean().squaredNorm();

  std::vector<double> scales(nodes);
  for (std::size_t t = 0; t < nodes; ++t) scales[t] = scale_of_theta(theta_grid[t]);

  // contrib[t * n + j] = sum_l ||posterior mean||^2 for data point j at node t
  std::vector<double> contrib(nodes * n, 0.0);
  const Rng noise_root = Rng(seed).split(0x5E9A);

  parallel_for(n, resolve_threads(threads), [&](std::size_t begin, std::size_t end) {
    std::vector<double> base(n), logit(n);
    Eigen::VectorXd weight(static_cast<Eigen::Index>(n));
    Eigen::RowVectorXd mean(static_cast<Eigen::Index>(d));
    Matrix noise(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    Matrix proj;  // k x n projections of this point's noise draws onto the data
    for (std::size_t j = begin; j < end; ++j) {
      // each data point gets its own k draws, reused at every theta node
      Rng rng = noise_root.split(j);
      for (Eigen::Index l = 0; l < noise.rows(); ++l)
        for (Eigen::Index c = 0; c < noise.cols(); ++c) noise(l, c) = rng.normal();
      proj.noalias() = noise * X.transpose();

      const double* xj = xs + j * d;
      for (std::size_t i = 0; i < n; ++i) {
        const double* xi = xs + i * d;
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += xj[c] * xi[c];
        base[i] = dot - half_norms[i];
      }
      for (std::size_t t = 0; t < nodes; ++t) {
        double acc = 0.0;
        if (theta_grid[t] == 0.0) {
          acc = static_cast<double>(k) * centroid_sq;
        } else if (near_top(theta_grid[t])) {
          // the posterior collapses onto x_j (rows assumed distinct)
          acc = static_cast<double>(k) * 2.0 * half_norms[j];
        } else {
          const double s = scales[t], s2 = s * s;
          for (std::size_t l = 0; l < k; ++l) {
            const double* z = proj.data() + l * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
              logit[i] = s2 * base[i] + s * z[i];
              mx = std::max(mx, logit[i]);
            }
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              const double a = logit[i] - mx;
              weight[i] = a > kLogitCutoff ? std::exp(a) : 0.0;
              total += weight[i];
            }
            mean.noalias() = weight.transpose() * X;
            acc += mean.squaredNorm() / (total * total);
          }
        }
        contrib[t * n + j] = acc;
      }
    }
  });

  std::vector<double> theta(theta_grid.begin(), theta_grid.end());
  std::vector<double> lambda(nodes);
  const double norm = static_cast<double>(n) * static_cast<double>(d) * static_cast<double>(k);
  for (std::size_t t = 0; t < nodes; ++t) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += contrib[t * n + j];
    lambda[t] = std::clamp(sum / norm, 0.0, 1.0);
  }
  return LambdaEstimate(std::move(theta), std::move(lambda), n, k, seed);
}

double eval_lambda(const LambdaEstimate& est, double theta) {
  if (est.spline().empty()) fail(ErrorKind::BadGrid, "empty lambda estimate");
  const auto& knots = est.theta();
  if (!(theta >= knots.front() - kEndpointTol && theta <= knots.back() + kEndpointTol))
    fail(ErrorKind::OutOfRange, "theta outside the estimated range");
  return std::clamp(est.value(std::clamp(theta, knots.front(), knots.back())), 0.0, 1.0);
}

double lambda_gaussian(double s) {
  if (std::isinf(s)) return 1.0;
  if (std::isnan(s) || s < 0.0) fail(ErrorKind::OutOfRange, "signal-to-noise must be >= 0");
  const double s2 = s * s;
  return s2 / (1.0 + s2);
}

double lambda_two_point(double s, std::size_t d, std::size_t quad_order) {
  if (d == 0) fail(ErrorKind::BadShape, "dimension must be positive");
  if (std::isinf(s)) return 1.0;
  if (std::isnan(s) || s < 0.0) fail(ErrorKind::OutOfRange, "signal-to-noise must be >= 0");
  const double dd = static_cast<double>(d);
  const double shift = s * s * dd, spread = s * std::sqrt(dd);
  const auto& rule = gauss_hermite(quad_order);
  return rule.expect([&](double u) {
    const double th = std::tanh(shift + spread * u);
    return th * th;
  });
}

LambdaCurve::LambdaCurve(const LambdaEstimate& est)
    : estimate_(std::make_shared<const LambdaEstimate>(est)), name_("estimate") {
  if (est.spline().empty()) fail(ErrorKind::BadGrid, "empty lambda estimate");
  if (est.theta().front() > kEndpointTol || !near_top(est.theta().back()))
    fail(ErrorKind::BadGrid, "lambda estimate must span [0, pi/2]");
}

LambdaCurve LambdaCurve::from_function(std::function<double(double)> of_theta, std::string name) {
  LambdaCurve c;
  c.of_theta_ = std::move(of_theta);
  c.name_ = std::move(name);
  return c;
}

LambdaCurve LambdaCurve::unit() {
  LambdaCurve c = from_function([](double) { return 1.0; }, "unit");
  c.complement_ = [](double) { return 0.0; };
  return c;
}

LambdaCurve LambdaCurve::gaussian() {
  LambdaCurve c = from_function(
      [](double th) {
        const double sn = std::sin(th);
        return sn * sn;
      },
      "gaussian");
  c.complement_ = [](double th) {
    const double cs = std::cos(th);
    return cs * cs;
  };
  return c;
}

double LambdaCurve::operator()(double theta) const {
  if (!(theta >= -kEndpointTol && theta <= kHalfPi + kEndpointTol))
    fail(ErrorKind::OutOfRange, "theta outside [0, pi/2]");
  theta = std::clamp(theta, 0.0, kHalfPi);
  if (estimate_) return eval_lambda(*estimate_, theta);
  return std::clamp(of_theta_(theta), 0.0, 1.0);
}

double LambdaCurve::complement(double theta) const {
  if (estimate_) {
    const auto& knots = estimate_->theta();
    if (!(theta >= knots.front() - kEndpointTol && theta <= knots.back() + kEndpointTol))
      fail(ErrorKind::OutOfRange, "theta outside the estimated range");
    return std::clamp(estimate_->complement(std::clamp(theta, knots.front(), knots.back())), 0.0, 1.0);
  }
  if (complement_) {
    if (!(theta >= -kEndpointTol && theta <= kHalfPi + kEndpointTol))
      fail(ErrorKind::OutOfRange, "theta outside [0, pi/2]");
    return std::clamp(complement_(std::clamp(theta, 0.0, kHalfPi)), 0.0, 1.0);
  }
  return 1.0 - (*this)(theta);
}

void save_lambda(const LambdaEstimate& est, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.precision(17);
  out << "theta,lambda\n";
  for (std::size_t i = 0; i < est.theta().size(); ++i)
    out << est.theta()[i] << ',' << est.lambda()[i] << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());

  const auto& th = est.theta();
  nlohmann::json side = {
      {"n", est.n_data()},
      {"k", est.k_noise()},
      {"seed", est.seed()},
      {"grid_spec", {{"nodes", th.size()}, {"lo", th.front()}, {"hi", th.back()}}}};
  auto side_path = path;
  side_path += ".json";
  std::ofstream js(side_path);
  if (!js) fail(ErrorKind::IoError, "cannot write " + side_path.string());
  js << side.dump(2) << '\n';
}

LambdaEstimate load_lambda(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "theta,lambda")
    fail(ErrorKind::FormatError, "expected header theta,lambda in " + path.string());
  std::vector<double> theta, lambda;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      fail(ErrorKind::FormatError, "line " + std::to_string(lineno) + ": expected two fields");
    try {
      std::size_t used = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      theta.push_back(std::stod(a, &used));
      if (used != a.size()) throw std::invalid_argument(a);
      lambda.push_back(std::stod(b, &used));
      if (used != b.size()) throw std::invalid_argument(b);
    } catch (const std::logic_error&) {
      fail(ErrorKind::FormatError, "line " + std::to_string(lineno) + ": not a number");
    }
  }
  std::size_t n = 0, k = 0;
  std::uint64_t seed = 0;
  auto side_path = path;
  side_path += ".json";
  if (std::ifstream js(side_path); js) {
    try {
      auto side = nlohmann::json::parse(js);
      n = side.value("n", std::size_t{0});
      k = side.value("k", std::size_t{0});
      seed = side.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::FormatError, "bad sidecar " + side_path.string() + ": " + e.what());
    }
  }
  return LambdaEstimate(std::move(theta), std::move(lambda), n, k, seed);
}

}  // namespace kopath
