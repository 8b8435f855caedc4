#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "kopath/dataset.hpp"
#include "kopath/schedule.hpp"

namespace kopath {

// Fully connected tanh network mapping (t, x) to a velocity in R^d.
// Parameters are stored flat, layer by layer: weights (out x in, row-major)
// then biases.
class VectorFieldModel {
 public:
  // Default architecture 3 -> 64 -> 64 -> 64 -> 2. Weights and biases uniform
  // in +-1/sqrt(fan_in).
  explicit VectorFieldModel(std::vector<std::size_t> sizes = {3, 64, 64, 64, 2}, std::uint64_t seed = 0);
  static VectorFieldModel zeros(std::vector<std::size_t> sizes = {3, 64, 64, 64, 2});

  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  std::size_t dim() const noexcept { return sizes_.back(); }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }

  // inputs: B x (1 + d) rows (t, x); returns B x d.
  Matrix forward(const Matrix& inputs) const;
  // Evaluates v_t at the rows of x.
  Matrix velocity(double t, const Matrix& x) const;

  // Given dLoss/dOutput for a forward pass on `inputs`, accumulates
  // dLoss/dParams into grad (resized to param_count()).
  void backward(const Matrix& inputs, const Matrix& grad_out, std::vector<double>& grad) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<double> params_;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// x = a(t) x1 + m(t) x0, target u = m'(t) x0 + a'(t) x1; loss is the batch
// mean of ||v_t(x) - u||^2 with its gradient by reverse mode.
LossAndGrad cfm_loss_batch(const VectorFieldModel& model, const Schedule& schedule, const Matrix& x1,
                           const Matrix& x0, std::span<const double> t);

struct TrainConfig {
  Schedule schedule = Schedule::cond_ot();
  std::size_t batch = 256;
  std::size_t steps = 5000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double t_eps = 1e-3;  // t is drawn from [0, 1 - t_eps]
};

struct TrainResult {
  VectorFieldModel model;
  std::vector<double> loss_trace;
};

// Adam on the conditional loss. Diverged if a loss turns non-finite.
TrainResult train(const Dataset& data, const TrainConfig& config);

// Mean of the last / first `window` entries of a trace.
double smoothed_head(std::span<const double> trace, std::size_t window = 100);
double smoothed_tail(std::span<const double> trace, std::size_t window = 100);

// Any velocity field: out = v_t(x) for the rows of x.
using VelocityField = std::function<Matrix(double t, const Matrix& x)>;

// x <- x + v_{k/nfe}(x) / nfe for k = 0..nfe-1, from x ~ N(0, I). Trajectory i
// draws its start from its own stream, so results do not depend on `threads`.
Matrix sample_euler(const VelocityField& field, std::size_t dim, std::size_t n, std::size_t nfe,
                    std::uint64_t seed, unsigned threads = 0);
Matrix sample_euler(const VectorFieldModel& model, std::size_t n, std::size_t nfe, std::uint64_t seed,
                    unsigned threads = 0);

// (1/d) mean over Euler trajectories and steps of ||v_{t_k}(x_{t_k})||^2.
double model_ke(const VelocityField& field, std::size_t dim, std::size_t nfe, std::size_t n_paths,
                std::uint64_t seed, unsigned threads = 0);
double model_ke(const VectorFieldModel& model, std::size_t nfe, std::size_t n_paths, std::uint64_t seed,
                unsigned threads = 0);

// V-statistic energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'|.
// TooFewSamples when either set has fewer than 1000 rows.
double energy_distance(const Matrix& a, const Matrix& b, unsigned threads = 0);
inline double eval_divergence_metric(const Matrix& samples, const Matrix& data, unsigned threads = 0) {
  return energy_distance(samples, data, threads);
}

// "KOPM", u16 version = 1, u64 layer count, u64 sizes, f64 parameters; little-endian.
void save_model(const VectorFieldModel& model, const std::filesystem::path& path);
VectorFieldModel load_model(const std::filesystem::path& path);

}  // namespace kopath
