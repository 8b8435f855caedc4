#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace kopath {

// Nodes and weights for E_{z ~ N(0,1)}[f(z)] ~ sum_i w_i f(z_i); weights sum to 1.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <typename F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

// Golub-Welsch on the probabilists' Hermite recurrence. Rules are cached per
// order, so repeated calls are cheap and thread-safe.
const GaussHermiteRule& gauss_hermite(std::size_t order);

// Composite Simpson on `nodes` equispaced points (rounded up to odd) over [lo, hi].
double simpson(const std::function<double(double)>& f, double lo, double hi, std::size_t nodes);

// Simpson over [trim, 1 - trim] plus trim * f at each trimmed end, standing
// in for the endpoint slivers where the integrand is singular or undefined.
struct TrimmedRule {
  std::size_t nodes = 1001;
  double trim = 1e-4;
};
double integrate_unit(const std::function<double(double)>& f, const TrimmedRule& rule);

}  // namespace kopath
