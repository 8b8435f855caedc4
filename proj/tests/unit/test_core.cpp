#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <vector>

#include "helpers.hpp"
#include "kopath/dataset.hpp"
#include "kopath/parallel.hpp"
#include "kopath/quadrature.hpp"
#include "kopath/rng.hpp"
#include "kopath/spline.hpp"

using namespace kopath;

TEST_SUITE("rng") {
  TEST_CASE("equal seeds give equal streams, splits are independent") {
    Rng a(42), b(42), c(43);
    std::vector<std::uint64_t> va, vb, vc;
    for (int i = 0; i < 8; ++i) {
      va.push_back(a.next_u64());
      vb.push_back(b.next_u64());
      vc.push_back(c.next_u64());
    }
    CHECK(va == vb);
    CHECK(va != vc);
    CHECK(Rng(5).split(3).next_u64() == Rng(5).split(3).next_u64());
    CHECK(Rng(5).split(3).next_u64() != Rng(5).split(4).next_u64());
  }

  TEST_CASE("first draws are not degenerate") {
    std::set<std::uint64_t> firsts;
    for (std::uint64_t s = 0; s < 64; ++s) {
      const auto x = Rng(0).split(s).next_u64();
      CHECK(x != 0);
      firsts.insert(x);
    }
    CHECK(firsts.size() == 64);
  }

  TEST_CASE("uniform and normal moments") {
    Rng r(7);
    const int n = 200000;
    double su = 0, sz = 0, sz2 = 0;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      su += u;
      const double z = r.normal();
      sz += z;
      sz2 += z * z;
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sz / n) < 0.01);
    CHECK(sz2 / n == doctest::Approx(1.0).epsilon(0.02));
  }

  TEST_CASE("below stays in range") {
    Rng r(1);
    for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
  }
}

TEST_SUITE("dataset") {
  TEST_CASE("normalize centers and scales") {
    Matrix raw(3, 2);
    raw << 1, 2, 3, 4, 5, 9;
    const auto d = Dataset::normalize(raw);
    CHECK(d.mean_defect() < 1e-12);
    CHECK(d.average_variance() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(is_normalized(d.points()));
  }

  TEST_CASE("normalize errors") {
    CHECK_KIND(Dataset::normalize(Matrix(1, 3)), BadShape);
    CHECK_KIND(Dataset::normalize(Matrix(4, 0)), BadShape);
    Matrix same = Matrix::Ones(5, 2);
    CHECK_KIND(Dataset::normalize(same), DegenerateData);
    Matrix bad = Matrix::Zero(3, 1);
    bad(0, 0) = std::nan("");
    CHECK_KIND(Dataset::normalize(bad), BadShape);
  }

  TEST_CASE("generators are normalized and seed-determined") {
    const auto cb = gen_checkerboard(500, 3);
    CHECK(cb.n() == 500);
    CHECK(cb.d() == 2);
    CHECK(cb.mean_defect() < 1e-9);
    CHECK(cb.average_variance() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cb.points() == gen_checkerboard(500, 3).points());
    CHECK(cb.points() != gen_checkerboard(500, 4).points());

    const auto g = gen_gaussian(50, 16, 1);
    CHECK(g.d() == 16);
    CHECK(is_normalized(g.points()));

    const auto tp = gen_two_point(9);
    CHECK(tp.n() == 2);
    CHECK(tp.points()(0, 0) == doctest::Approx(3.0));
    CHECK(tp.points()(1, 0) == doctest::Approx(-3.0));
    CHECK(tp.average_variance() == doctest::Approx(1.0));
  }

  TEST_CASE("checkerboard draws land on the even cells") {
    const auto raw = sample_checkerboard(4000, 11);
    int counts[4][4] = {};
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      const double x = raw(i, 0), y = raw(i, 1);
      REQUIRE(x >= -2.0);
      REQUIRE(x < 2.0);
      REQUIRE(y >= -2.0);
      REQUIRE(y < 2.0);
      const int cx = static_cast<int>(std::floor(x + 2.0)), cy = static_cast<int>(std::floor(y + 2.0));
      CHECK((cx + cy) % 2 == 0);
      ++counts[cx][cy];
    }
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if ((a + b) % 2 == 0) CHECK(std::abs(counts[a][b] - 500) < 100);
  }

  TEST_CASE("save and load round trip bit-exactly") {
    const auto g = gen_gaussian(20, 3, 9);
    for (const char* name : {"g.bin", "g.csv"}) {
      const auto p = testutil::temp_path(name);
      save_dataset(g, p);
      const auto back = load_dataset(p);
      CHECK(back.points() == g.points());
    }
  }

  TEST_CASE("load errors") {
    CHECK_KIND(load_dataset(testutil::temp_path("does_not_exist.bin")), IoError);
    const auto p = testutil::temp_path("bad_magic.bin");
    {
      std::ofstream out(p, std::ios::binary);
      out << "NOPE and some bytes";
    }
    CHECK_KIND(load_dataset(p), FormatError);
    const auto q = testutil::temp_path("truncated.bin");
    {
      std::ofstream out(q, std::ios::binary);
      out.write("KOPD\x01\x00", 6);
    }
    CHECK_KIND(load_dataset(q), FormatError);
  }

  TEST_CASE("format follows extension") {
    CHECK(format_for("a.csv") == DataFormat::Csv);
    CHECK(format_for("a.bin") == DataFormat::Binary);
    CHECK(format_for("a") == DataFormat::Binary);
  }
}

TEST_SUITE("parallel") {
  TEST_CASE("chunks cover the range once for any worker count") {
    for (unsigned t : {1u, 2u, 3u, 8u}) {
      std::vector<int> hits(103, 0);
      parallel_for(hits.size(), t, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) ++hits[i];
      });
      for (int h : hits) CHECK(h == 1);
    }
    CHECK(resolve_threads(3) == 3);
    CHECK(resolve_threads(0) >= 1);
  }
}

TEST_SUITE("spline") {
  TEST_CASE("interpolates knots and reproduces lines") {
    std::vector<double> x = {0, 0.5, 1.3, 2, 3.1}, y;
    for (double v : x) y.push_back(2.0 * v - 1.0);
    CubicSpline s(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(s(x[i]) == doctest::Approx(y[i]).epsilon(1e-14));
    for (double v = 0.0; v <= 3.1; v += 0.07) {
      CHECK(s(v) == doctest::Approx(2.0 * v - 1.0).epsilon(1e-12));
      CHECK(s.derivative(v) == doctest::Approx(2.0).epsilon(1e-10));
    }
  }

  TEST_CASE("natural end conditions") {
    // Natural spline through a cubic's samples has zero curvature at the ends,
    // so the end slope differs from the cubic's, while interior error is small.
    std::vector<double> x, y;
    for (int i = 0; i <= 40; ++i) {
      x.push_back(i / 40.0);
      y.push_back(std::sin(3.0 * x.back()));
    }
    CubicSpline s(x, y);
    const double h = 1e-4;
    const double curv0 = (s(2 * h) - 2 * s(h) + s(0)) / (h * h);
    CHECK(std::abs(curv0) < 1e-2);
    CHECK(s(0.5123) == doctest::Approx(std::sin(3.0 * 0.5123)).epsilon(1e-6));
  }

  TEST_CASE("bad knots") {
    std::vector<double> x = {0, 1, 1, 2}, y = {0, 1, 2, 3};
    CHECK_KIND(CubicSpline(x, y), BadGrid);
    std::vector<double> x2 = {0, 1}, y2 = {0, 1, 2};
    CHECK_KIND(CubicSpline(x2, y2), BadGrid);
  }
}

TEST_SUITE("quadrature") {
  TEST_CASE("Gauss-Hermite moments") {
    const auto& r = gauss_hermite(40);
    CHECK(r.expect([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(r.expect([](double z) { return z; })) < 1e-13);
    CHECK(r.expect([](double z) { return z * z; }) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.expect([](double z) { return z * z * z * z; }) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(r.expect([](double z) { return std::cos(z); }) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(&gauss_hermite(40) == &r);
  }

  TEST_CASE("Simpson is exact on cubics") {
    CHECK(simpson([](double x) { return x * x * x; }, 0.0, 2.0, 3) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(simpson([](double x) { return std::sin(x); }, 0.0, std::numbers::pi, 1001) ==
          doctest::Approx(2.0).epsilon(1e-10));
  }

  TEST_CASE("trimmed unit rule") {
    CHECK(integrate_unit([](double) { return 2.0; }, {}) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(integrate_unit([](double t) { return t; }, {}) == doctest::Approx(0.5).epsilon(1e-12));
  }
}
