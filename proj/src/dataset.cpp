#include "kopath/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "kopath/error.hpp"
#include "kopath/rng.hpp"

namespace kopath {

namespace {

constexpr std::array<char, 4> kDataMagic = {'K', 'O', 'P', 'D'};
constexpr std::uint16_t kDataVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

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

}  // namespace

Dataset Dataset::normalize(const Matrix& raw) {
  const auto n = raw.rows();
  const auto d = raw.cols();
  if (n < 2 || d < 1)
    fail(ErrorKind::BadShape, "need at least 2 samples of dimension >= 1, got " +
                                  std::to_string(n) + "x" + std::to_string(d));
  if (!raw.allFinite()) fail(ErrorKind::BadShape, "non-finite entries in data");

  const Eigen::RowVectorXd mean = raw.colwise().mean();
  Matrix centered = raw.rowwise() - mean;
  const double ss = centered.squaredNorm();
  if (!(ss > 0.0)) fail(ErrorKind::DegenerateData, "all samples coincide after centering");
  const double scale = std::sqrt(static_cast<double>(d) * static_cast<double>(n) / ss);
  centered *= scale;
  return Dataset(std::move(centered));
}

Dataset Dataset::adopt(Matrix points) {
  if (points.rows() >= 2 && points.cols() >= 1 && points.allFinite() && is_normalized(points))
    return Dataset(std::move(points));
  return normalize(points);
}

double Dataset::mean_defect() const { return points_.colwise().mean().cwiseAbs().maxCoeff(); }

double Dataset::average_variance() const {
  return points_.squaredNorm() / (static_cast<double>(n()) * static_cast<double>(d()));
}

bool is_normalized(const Matrix& points, double tol) {
  if (points.rows() == 0 || points.cols() == 0) return false;
  const double mean = points.colwise().mean().cwiseAbs().maxCoeff();
  const double var = points.squaredNorm() / static_cast<double>(points.rows() * points.cols());
  return mean < tol && std::abs(var - 1.0) <= tol;
}

Matrix sample_checkerboard(std::size_t n, std::uint64_t seed) {
  // The eight on-cells, indexed by (column, row) in {0..3}^2 with even sum.
  std::array<std::array<int, 2>, 8> cells{};
  std::size_t c = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if ((i + j) % 2 == 0) cells[c++] = {i, j};

  Rng rng = Rng(seed).split(0xC4EC);
  Matrix out(static_cast<Eigen::Index>(n), 2);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& cell = cells[rng.below(cells.size())];
    out(static_cast<Eigen::Index>(k), 0) = -2.0 + cell[0] + rng.uniform();
    out(static_cast<Eigen::Index>(k), 1) = -2.0 + cell[1] + rng.uniform();
  }
  return out;
}

Matrix sample_gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng = Rng(seed).split(0x6A55);
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  return out;
}

Dataset gen_checkerboard(std::size_t n, std::uint64_t seed) {
  if (n < 2) fail(ErrorKind::BadShape, "checkerboard needs n >= 2");
  return Dataset::normalize(sample_checkerboard(n, seed));
}

Dataset gen_gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 2 || d < 1) fail(ErrorKind::BadShape, "gaussian needs n >= 2 and d >= 1");
  return Dataset::normalize(sample_gaussian(n, d, seed));
}

Dataset gen_two_point(std::size_t d) {
  if (d < 1) fail(ErrorKind::BadShape, "two-point needs d >= 1");
  Matrix pts = Matrix::Zero(2, static_cast<Eigen::Index>(d));
  pts(0, 0) = std::sqrt(static_cast<double>(d));
  pts(1, 0) = -pts(0, 0);
  return Dataset::normalize(pts);
}

DataFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DataFormat::Csv : DataFormat::Binary;
}

void save_points(const Matrix& points, const std::filesystem::path& path, DataFormat format) {
  if (format == DataFormat::Binary) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out.write(kDataMagic.data(), kDataMagic.size());
    write_le<std::uint16_t>(out, kDataVersion);
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(points.rows()));
    write_le<std::uint64_t>(out, static_cast<std::uint64_t>(points.cols()));
    out.write(reinterpret_cast<const char*>(points.data()),
              static_cast<std::streamsize>(points.size() * sizeof(double)));
    if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
    return;
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  for (Eigen::Index k = 0; k < points.cols(); ++k) out << (k ? ",x" : "x") << k;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index k = 0; k < points.cols(); ++k) out << (k ? "," : "") << points(i, k);
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

Matrix load_points(const std::filesystem::path& path, DataFormat format) {
  if (format == DataFormat::Binary) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kDataMagic) fail(ErrorKind::FormatError, "bad magic in " + path.string());
    const auto version = read_le<std::uint16_t>(in, path);
    if (version != kDataVersion)
      fail(ErrorKind::FormatError, "unsupported dataset version " + std::to_string(version));
    const auto n = read_le<std::uint64_t>(in, path);
    const auto d = read_le<std::uint64_t>(in, path);
    if (d == 0 || n > (std::uint64_t{1} << 40) / d)
      fail(ErrorKind::FormatError, "implausible shape in " + path.string());
    Matrix pts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    in.read(reinterpret_cast<char*>(pts.data()), static_cast<std::streamsize>(n * d * sizeof(double)));
    if (static_cast<std::uint64_t>(in.gcount()) != n * d * sizeof(double))
      fail(ErrorKind::FormatError, "truncated payload in " + path.string());
    in.peek();
    if (!in.eof()) fail(ErrorKind::FormatError, "trailing bytes in " + path.string());
    return pts;
  }

  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::FormatError, "empty csv " + path.string());
  const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        fail(ErrorKind::FormatError, "bad number '" + cell + "' in " + path.string());
      }
      ++cols;
    }
    if (cols != d)
      fail(ErrorKind::FormatError, "row " + std::to_string(rows + 1) + " has " +
                                       std::to_string(cols) + " fields, expected " +
                                       std::to_string(d));
    ++rows;
  }
  Matrix pts(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  std::copy(values.begin(), values.end(), pts.data());
  return pts;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  save_points(data.points(), path, format_for(path));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return Dataset::adopt(load_points(path, format_for(path)));
}

}  // namespace kopath
