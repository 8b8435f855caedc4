#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

#include <Eigen/Core>

namespace kopath {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// A finite data distribution q: n equally weighted points in R^d, centered and
// scaled so that (1/(d n)) sum ||x_i||^2 = 1. Immutable once built.
class Dataset {
 public:
  // Centers the rows and rescales by sqrt(d n / sum ||x_i - mean||^2).
  // Throws BadShape when n < 2 or d < 1, DegenerateData when all rows coincide.
  static Dataset normalize(const Matrix& raw);

  // Wraps points that are already normalized (within 1e-9) without touching
  // their bits; falls back to normalize() otherwise.
  static Dataset adopt(Matrix points);

  const Matrix& points() const noexcept { return points_; }
  std::size_t n() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(points_.cols()); }
  std::span<const double> row(std::size_t i) const noexcept {
    return {points_.data() + i * d(), d()};
  }

  // max_k |(1/n) sum_i x_ik|
  double mean_defect() const;
  // (1/(d n)) sum ||x_i||^2
  double average_variance() const;

 private:
  explicit Dataset(Matrix points) : points_(std::move(points)) {}

  Matrix points_;
};

bool is_normalized(const Matrix& points, double tol = 1e-9);

// Raw (pre-normalization) draws, exposed for tests of the sampling law.
Matrix sample_checkerboard(std::size_t n, std::uint64_t seed);
Matrix sample_gaussian(std::size_t n, std::size_t d, std::uint64_t seed);

// n points uniform over the eight "on" cells of a 4x4 checkerboard on
// [-2, 2]^2, where cell (i, j) is on iff i + j is even.
Dataset gen_checkerboard(std::size_t n, std::uint64_t seed);
Dataset gen_gaussian(std::size_t n, std::size_t d, std::uint64_t seed);
// {+v, -v} with ||v||^2 = d along the first axis; already normalized.
Dataset gen_two_point(std::size_t d);

enum class DataFormat { Binary, Csv };

// Binary: "KOPD", u16 version = 1, u64 n, u64 d, n*d f64, all little-endian.
// CSV: header x0,...,x{d-1}, one sample per line, 17 significant digits.
void save_points(const Matrix& points, const std::filesystem::path& path, DataFormat format);
Matrix load_points(const std::filesystem::path& path, DataFormat format);

// Format inferred from the extension (.csv => Csv, anything else => Binary).
DataFormat format_for(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace kopath
