#include "kopath/flowmatch.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>

#include "kopath/error.hpp"
#include "kopath/parallel.hpp"
#include "kopath/rng.hpp"

namespace kopath {
namespace {

constexpr std::array<char, 4> kModelMagic = {'K', 'O', 'P', 'M'};
constexpr std::uint16_t kModelVersion = 1;
constexpr std::size_t kBlock = 256;  // fixed row blocks keep results independent of the worker count

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using ConstMap = Eigen::Map<const Matrix>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;

template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorKind::FormatError, "truncated file " + path.string());
  return value;
}

std::size_t count_params(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) fail(ErrorKind::BadShape, "a network needs at least two layer sizes");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l + 1] == 0) fail(ErrorKind::BadShape, "layer sizes must be positive");
    total += sizes[l + 1] * (sizes[l] + 1);
  }
  return total;
}

// acts[0] = inputs, acts[l] = layer l output (tanh for hidden layers, linear last)
void forward_pass(const VectorFieldModel& model, const Matrix& inputs, std::vector<Matrix>& acts) {
  const auto& sizes = model.sizes();
  if (static_cast<std::size_t>(inputs.cols()) != sizes.front())
    fail(ErrorKind::BadShape, "model expects " + std::to_string(sizes.front()) + " input columns");
  const std::size_t layers = sizes.size() - 1;
  acts.resize(layers + 1);
  acts[0] = inputs;
  const double* p = model.params().data();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]), out = static_cast<Eigen::Index>(sizes[l + 1]);
    ConstMap W(p, out, in);
    ConstRowMap b(p + out * in, out);
    p += out * (in + 1);
    Matrix z = acts[l] * W.transpose();
    z.rowwise() += b;
    if (l + 1 < layers) z = z.array().tanh();
    acts[l + 1] = std::move(z);
  }
}

void backward_pass(const VectorFieldModel& model, const std::vector<Matrix>& acts, Matrix g,
                   std::vector<double>& grad) {
  const auto& sizes = model.sizes();
  const std::size_t layers = sizes.size() - 1;
  grad.assign(model.param_count(), 0.0);
  std::vector<std::size_t> offset(layers);
  for (std::size_t l = 0, off = 0; l < layers; ++l) {
    offset[l] = off;
    off += sizes[l + 1] * (sizes[l] + 1);
  }
  for (std::size_t l = layers; l-- > 0;) {
    const auto in = static_cast<Eigen::Index>(sizes[l]), out = static_cast<Eigen::Index>(sizes[l + 1]);
    Eigen::Map<Matrix> dW(grad.data() + offset[l], out, in);
    Eigen::Map<Eigen::RowVectorXd> db(grad.data() + offset[l] + out * in, out);
    dW.noalias() = g.transpose() * acts[l];
    db = g.colwise().sum();
    if (l > 0) {
      ConstMap W(model.params().data() + offset[l], out, in);
      Matrix next = g * W;
      g = next.array() * (1.0 - acts[l].array().square());
    }
  }
}

Matrix start_points(std::size_t dim, std::size_t begin, std::size_t end, std::uint64_t seed) {
  Matrix x(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(dim));
  const Rng root(seed);
  for (std::size_t i = begin; i < end; ++i) {
    Rng r = root.split(i);
    for (std::size_t c = 0; c < dim; ++c) x(static_cast<Eigen::Index>(i - begin), static_cast<Eigen::Index>(c)) = r.normal();
  }
  return x;
}

template <typename Body>
void for_blocks(std::size_t n, unsigned threads, Body&& body) {
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  parallel_for(blocks, resolve_threads(threads), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) body(k, k * kBlock, std::min(n, (k + 1) * kBlock));
  });
}

VelocityField as_field(const VectorFieldModel& model) {
  return [&model](double t, const Matrix& x) { return model.velocity(t, x); };
}

}  // namespace

VectorFieldModel::VectorFieldModel(std::vector<std::size_t> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
  params_.resize(count_params(sizes_));
  Rng rng = Rng(seed).split(0x3E7);
  double* p = params_.data();
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    const std::size_t count = sizes_[l + 1] * (sizes_[l] + 1);
    for (std::size_t i = 0; i < count; ++i) p[i] = rng.uniform(-bound, bound);
    p += count;
  }
}

VectorFieldModel VectorFieldModel::zeros(std::vector<std::size_t> sizes) {
  VectorFieldModel m(std::move(sizes), 0);
  std::fill(m.params_.begin(), m.params_.end(), 0.0);
  return m;
}

Matrix VectorFieldModel::forward(const Matrix& inputs) const {
  std::vector<Matrix> acts;
  forward_pass(*this, inputs, acts);
  return std::move(acts.back());
}

Matrix VectorFieldModel::velocity(double t, const Matrix& x) const {
  Matrix in(x.rows(), x.cols() + 1);
  in.col(0).setConstant(t);
  in.rightCols(x.cols()) = x;
  return forward(in);
}

void VectorFieldModel::backward(const Matrix& inputs, const Matrix& grad_out, std::vector<double>& grad) const {
  std::vector<Matrix> acts;
  forward_pass(*this, inputs, acts);
  if (grad_out.rows() != acts.back().rows() || grad_out.cols() != acts.back().cols())
    fail(ErrorKind::BadShape, "output gradient has the wrong shape");
  backward_pass(*this, acts, grad_out, grad);
}

LossAndGrad cfm_loss_batch(const VectorFieldModel& model, const Schedule& schedule, const Matrix& x1,
                           const Matrix& x0, std::span<const double> t) {
  const auto B = x1.rows(), d = x1.cols();
  if (x0.rows() != B || x0.cols() != d || static_cast<Eigen::Index>(t.size()) != B || B == 0)
    fail(ErrorKind::BadShape, "batch components differ in shape");
  if (static_cast<std::size_t>(d) != model.dim()) fail(ErrorKind::BadShape, "batch dimension does not match the model");
  Matrix inputs(B, d + 1), target(B, d);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto v = schedule.eval(t[static_cast<std::size_t>(i)]);
    inputs(i, 0) = t[static_cast<std::size_t>(i)];
    inputs.row(i).tail(d) = v.a * x1.row(i) + v.m * x0.row(i);
    target.row(i) = v.dm * x0.row(i) + v.da * x1.row(i);
  }
  std::vector<Matrix> acts;
  forward_pass(model, inputs, acts);
  const Matrix diff = acts.back() - target;
  LossAndGrad out;
  out.loss = diff.squaredNorm() / static_cast<double>(B);
  backward_pass(model, acts, (2.0 / static_cast<double>(B)) * diff, out.grad);
  return out;
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
  if (config.batch == 0) fail(ErrorKind::BadShape, "batch size must be positive");
  if (!(config.t_eps >= 0.0 && config.t_eps <= 0.01)) fail(ErrorKind::OutOfRange, "t_eps must lie in [0, 0.01]");
  const std::size_t d = data.d();
  TrainResult res{VectorFieldModel({d + 1, 64, 64, 64, d}, config.seed), {}};
  res.loss_trace.reserve(config.steps);
  Rng rng = Rng(config.seed).split(0xBA7C);
  auto& w = res.model.params();
  std::vector<double> m1(w.size(), 0.0), m2(w.size(), 0.0);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const auto B = static_cast<Eigen::Index>(config.batch);
  Matrix x1(B, static_cast<Eigen::Index>(d)), x0(B, static_cast<Eigen::Index>(d));
  std::vector<double> t(config.batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (Eigen::Index i = 0; i < B; ++i) {
      const auto j = static_cast<Eigen::Index>(rng.below(data.n()));
      x1.row(i) = data.points().row(j);
      for (Eigen::Index c = 0; c < x0.cols(); ++c) x0(i, c) = rng.normal();
      t[static_cast<std::size_t>(i)] = rng.uniform() * (1.0 - config.t_eps);
    }
    const auto lg = cfm_loss_batch(res.model, config.schedule, x1, x0, t);
    if (!std::isfinite(lg.loss)) fail(ErrorKind::Diverged, "loss became non-finite at step " + std::to_string(step));
    res.loss_trace.push_back(lg.loss);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
    for (std::size_t k = 0; k < w.size(); ++k) {
      m1[k] = b1 * m1[k] + (1 - b1) * lg.grad[k];
      m2[k] = b2 * m2[k] + (1 - b2) * lg.grad[k] * lg.grad[k];
      w[k] -= config.lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
    }
  }
  return res;
}

double smoothed_head(std::span<const double> trace, std::size_t window) {
  if (trace.empty()) fail(ErrorKind::EmptySeries, "empty loss trace");
  const std::size_t k = std::min(window, trace.size());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += trace[i];
  return s / static_cast<double>(k);
}

double smoothed_tail(std::span<const double> trace, std::size_t window) {
  if (trace.empty()) fail(ErrorKind::EmptySeries, "empty loss trace");
  const std::size_t k = std::min(window, trace.size());
  double s = 0.0;
  for (std::size_t i = trace.size() - k; i < trace.size(); ++i) s += trace[i];
  return s / static_cast<double>(k);
}

Matrix sample_euler(const VelocityField& field, std::size_t dim, std::size_t n, std::size_t nfe,
                    std::uint64_t seed, unsigned threads) {
  if (nfe == 0) fail(ErrorKind::OutOfRange, "nfe must be at least 1");
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const double h = 1.0 / static_cast<double>(nfe);
  for_blocks(n, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    Matrix x = start_points(dim, lo, hi, seed);
    for (std::size_t k = 0; k < nfe; ++k) x += h * field(static_cast<double>(k) * h, x);
    out.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(hi - lo)) = x;
  });
  return out;
}

Matrix sample_euler(const VectorFieldModel& model, std::size_t n, std::size_t nfe, std::uint64_t seed,
                    unsigned threads) {
  return sample_euler(as_field(model), model.dim(), n, nfe, seed, threads);
}

double model_ke(const VelocityField& field, std::size_t dim, std::size_t nfe, std::size_t n_paths,
                std::uint64_t seed, unsigned threads) {
  if (nfe == 0) fail(ErrorKind::OutOfRange, "nfe must be at least 1");
  if (n_paths == 0) fail(ErrorKind::TooFewSamples, "need at least one path");
  const std::size_t blocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks, 0.0);
  const double h = 1.0 / static_cast<double>(nfe);
  for_blocks(n_paths, threads, [&](std::size_t k, std::size_t lo, std::size_t hi) {
    Matrix x = start_points(dim, lo, hi, seed);
    double acc = 0.0;
    for (std::size_t s = 0; s < nfe; ++s) {
      const Matrix v = field(static_cast<double>(s) * h, x);
      acc += v.squaredNorm();
      x += h * v;
    }
    partial[k] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / (static_cast<double>(dim) * static_cast<double>(nfe) * static_cast<double>(n_paths));
}

double model_ke(const VectorFieldModel& model, std::size_t nfe, std::size_t n_paths, std::uint64_t seed,
                unsigned threads) {
  return model_ke(as_field(model), model.dim(), nfe, n_paths, seed, threads);
}

double energy_distance(const Matrix& a, const Matrix& b, unsigned threads) {
  if (a.rows() < 1000 || b.rows() < 1000) fail(ErrorKind::TooFewSamples, "energy distance needs >= 1000 samples per set");
  if (a.cols() != b.cols()) fail(ErrorKind::BadShape, "sample sets differ in dimension");
  auto mean_dist = [threads](const Matrix& x, const Matrix& y) {
    std::vector<double> rows(static_cast<std::size_t>(x.rows()));
    parallel_for(rows.size(), resolve_threads(threads), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        double s = 0.0;
        const auto xi = x.row(static_cast<Eigen::Index>(i));
        for (Eigen::Index j = 0; j < y.rows(); ++j) s += (y.row(j) - xi).norm();
        rows[i] = s;
      }
    });
    double total = 0.0;
    for (double r : rows) total += r;
    return total / (static_cast<double>(x.rows()) * static_cast<double>(y.rows()));
  };
  return 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
}

void save_model(const VectorFieldModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(kModelMagic.data(), kModelMagic.size());
  write_le<std::uint16_t>(out, kModelVersion);
  write_le<std::uint64_t>(out, model.sizes().size());
  for (auto s : model.sizes()) write_le<std::uint64_t>(out, s);
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(model.params().size() * sizeof(double)));
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

VectorFieldModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kModelMagic) fail(ErrorKind::FormatError, "bad magic in " + path.string());
  const auto version = read_le<std::uint16_t>(in, path);
  if (version != kModelVersion) fail(ErrorKind::FormatError, "unsupported model version " + std::to_string(version));
  const auto count = read_le<std::uint64_t>(in, path);
  if (count < 2 || count > 64) fail(ErrorKind::FormatError, "implausible layer count in " + path.string());
  std::vector<std::size_t> sizes(count);
  for (auto& s : sizes) {
    s = read_le<std::uint64_t>(in, path);
    if (s == 0 || s > (1u << 20)) fail(ErrorKind::FormatError, "implausible layer size in " + path.string());
  }
  auto model = VectorFieldModel::zeros(sizes);
  auto& p = model.params();
  in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != p.size() * sizeof(double))
    fail(ErrorKind::FormatError, "truncated weights in " + path.string());
  in.peek();
  if (!in.eof()) fail(ErrorKind::FormatError, "trailing bytes in " + path.string());
  return model;
}

}  // namespace kopath
