#include "kopath/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>

#include "kopath/error.hpp"

namespace kopath {

namespace {

GaussHermiteRule build_rule(std::size_t order) {
  const auto n = static_cast<Eigen::Index>(order);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n > 1 ? n - 1 : 0);
  for (Eigen::Index k = 1; k < n; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) fail(ErrorKind::NonFinite, "Gauss-Hermite eigensolve failed");

  GaussHermiteRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  for (Eigen::Index i = 0; i < n; ++i) {
    rule.nodes[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    const double v = solver.eigenvectors()(0, i);
    rule.weights[static_cast<std::size_t>(i)] = v * v;
  }
  // Symmetrize: the exact rule is symmetric about 0.
  for (std::size_t i = 0, j = order - 1; i < j; ++i, --j) {
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(std::size_t order) {
  if (order == 0) fail(ErrorKind::BadShape, "Gauss-Hermite order must be positive");
  static std::mutex mutex;
  static std::map<std::size_t, GaussHermiteRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build_rule(order)).first;
  return it->second;
}

double simpson(const std::function<double(double)>& f, double lo, double hi, std::size_t nodes) {
  if (nodes < 3) nodes = 3;
  if (nodes % 2 == 0) ++nodes;
  const std::size_t intervals = nodes - 1;
  const double h = (hi - lo) / static_cast<double>(intervals);
  double acc = f(lo) + f(hi);
  for (std::size_t i = 1; i < intervals; ++i) {
    const double x = lo + h * static_cast<double>(i);
    acc += (i % 2 == 1 ? 4.0 : 2.0) * f(x);
  }
  return acc * h / 3.0;
}

double integrate_unit(const std::function<double(double)>& f, const TrimmedRule& rule) {
  const double lo = rule.trim;
  const double hi = 1.0 - rule.trim;
  double body = simpson(f, lo, hi, rule.nodes);
  if (rule.trim > 0.0) body += rule.trim * (f(lo) + f(hi));
  return body;
}

}  // namespace kopath
