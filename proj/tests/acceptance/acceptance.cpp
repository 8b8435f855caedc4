// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: kopath_acceptance [--cli PATH] [--only C3,C8] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kopath/kopath.hpp"

using namespace kopath;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_dev_from_identity(const Schedule& s) {
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    worst = std::max(worst, std::abs(s.a(t) - t));
  }
  return worst;
}

double relative_spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  return (*hi - *lo) / std::abs(mean);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

Outcome gaussian_lambda() {
  const auto data = gen_gaussian(2000, 64, 11);
  const auto grid = default_theta_grid();
  const auto t0 = std::chrono::steady_clock::now();
  const auto est = estimate_lambda(data, grid, 1, 1, 1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double worst = 0.0, at = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double dev = std::abs(est.lambda()[i] - lambda_gaussian(scale_of_theta(grid[i])));
    if (dev > worst) {
      worst = dev;
      at = grid[i];
    }
  }
  // The closed form describes the population Gaussian; 2000 points in 64
  // dimensions are far apart, so the empirical posterior collapses early.
  return {worst < 0.05 && secs < 60.0,
          fmt("max|lam_hat - s^2/(1+s^2)| = %.4f at theta=%.3f (limit 0.05), k=1, %.1f s single-threaded (limit 60)",
              worst, at, secs)};
}

Outcome two_point_lambda() {
  const auto data = gen_two_point(1);
  const auto grid = default_theta_grid();
  const std::size_t seeds = 20, k = 200;
  std::vector<double> sum(grid.size(), 0.0), sum2(grid.size(), 0.0);
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto est = estimate_lambda(data, grid, k, 100 + s);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      sum[i] += est.lambda()[i];
      sum2[i] += est.lambda()[i] * est.lambda()[i];
    }
  }
  double worst = 0.0;
  std::size_t within = 0;
  const double n = static_cast<double>(seeds);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double mean = sum[i] / n;
    const double var = std::max(0.0, (sum2[i] / n - mean * mean) * n / (n - 1));
    const double se = std::sqrt(var / n);
    const double dev = std::abs(mean - lambda_two_point(scale_of_theta(grid[i]), 1));
    worst = std::max(worst, dev);
    if (dev <= 2 * se + 1e-12) ++within;
  }
  const double frac = static_cast<double>(within) / static_cast<double>(grid.size());
  // 2 SE is a 95% band per node; 90% of nodes inside it leaves room for chance
  return {worst < 0.02 && frac >= 0.9,
          fmt("20-seed mean: max deviation %.5f (limit 0.02), %.0f%% of %zu nodes within 2 SE (need >= 90%%)",
              worst, 100 * frac, grid.size())};
}

Outcome cond_ot_recovery() {
  const auto direct = optimize_direct(LambdaCurve::unit());
  const double dev = max_dev_from_identity(direct.schedule);
  const auto shot = shoot_b(LambdaCurve::unit());
  const bool ok = dev < 1e-2 && std::abs(direct.b - 2.0) < 0.05 && std::abs(shot.b - 2.0) < 1e-4;
  return {ok, fmt("direct: max|a-t| = %.2e, b = %.4f; shooting: b = %.7f", dev, direct.b, shot.b)};
}

Outcome energy_identities() {
  const double c_ot = cke(Schedule::cond_ot()), c_si = cke(Schedule::si());
  bool ok = std::abs(c_ot - 2.0) < 1e-6 && std::abs(c_si - kPi * kPi / 4) < 1e-6;

  Rng rng(424242);
  const auto grid = unit_grid(1001);
  double worst_excess = -INFINITY, worst_rel = 0.0;
  int admissible = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double p = rng.uniform(0.8, 3.0), q = rng.uniform(0.8, 3.0);
    std::vector<double> a, m;
    for (double t : grid) {
      a.push_back(std::pow(t, p));
      m.push_back(std::pow(1.0 - t, q));
    }
    const auto s = Schedule::tabulated(grid, a, m);
    if (check_schedule(s).ok) ++admissible;
    const double r1 = rng.uniform(0.2, 1.5), r2 = rng.uniform(0.2, 1.5), w = rng.uniform();
    const auto lam = LambdaCurve::from_function(
        [=](double th) {
          const double s2 = std::sin(th) * std::sin(th);
          return w * std::pow(s2, r1) + (1 - w) * std::pow(s2, r2);
        },
        "mixture");
    const auto rep = ke(s, lam);
    worst_excess = std::max(worst_excess, rep.ke - rep.cke);
    if (rep.ke > 1e-12) worst_rel = std::max(worst_rel, std::abs(rep.ke - rep.ke_cartesian) / rep.ke);
  }
  ok = ok && admissible == 100 && worst_excess <= 1e-10 && worst_rel < 1e-3;
  return {ok, fmt("cke(cond-ot)-2 = %.1e, cke(si)-pi^2/4 = %.1e; %d/100 admissible, max(ke-cke) = %.2e, "
                  "max polar/cartesian rel diff = %.1e",
                  c_ot - 2.0, c_si - kPi * kPi / 4, admissible, worst_excess, worst_rel)};
}

Outcome theorem_suite() {
  const auto eta_rep = check_eta_integral();
  bool ok = eta_rep.pass;
  std::string detail = fmt("int eta = %.6f (<= 3)", eta_rep.value);
  double prev = INFINITY;
  std::size_t squeeze_fail = 0, squeeze_total = 0;
  const std::vector<Schedule> builtins = {Schedule::cond_ot(), Schedule::si(), Schedule::ddpm()};
  for (std::size_t d : {16u, 64u, 256u}) {
    const auto data = gen_gaussian(4, d, 31);
    const auto est = estimate_lambda(data, default_theta_grid(), 64, 5);
    const auto rep = check_lambda_bound(data, est);
    ok = ok && rep.pass && rep.value < prev;
    prev = rep.value;
    detail += fmt("; d=%zu: int(1-lam) = %.4f <= %.4f", d, rep.value, rep.bound);
    for (const auto& r : check_ke_squeeze(data, builtins, est)) {
      ++squeeze_total;
      if (!r.pass) {
        ++squeeze_fail;
        detail += " [" + r.quantity + " failed]";
      }
    }
  }
  ok = ok && squeeze_fail == 0;
  detail += fmt("; squeeze %zu/%zu hold", squeeze_total - squeeze_fail, squeeze_total);
  return {ok, detail};
}

Outcome conservation() {
  std::vector<std::pair<std::string, LambdaCurve>> cases;
  cases.emplace_back("unit", LambdaCurve::unit());
  cases.emplace_back("cos^4 curve",
                     LambdaCurve::from_function(
                         [](double th) { return 1.0 - 0.5 * std::pow(std::cos(th), 4); }, "rising"));
  const auto data = gen_gaussian(16, 64, 4);
  cases.emplace_back("gaussian n=16 d=64", LambdaCurve(estimate_lambda(data, default_theta_grid(), 8, 1)));
  bool ok = true;
  std::string detail;
  for (const auto& [name, lam] : cases) {
    try {
      const auto sol = shoot_b(lam);
      const double spread = relative_spread(conserved_quantity(sol.curve, lam));
      ok = ok && spread < 0.01;
      detail += fmt("%s%s: b = %.5f, spread %.2e", detail.empty() ? "" : "; ", name.c_str(), sol.b, spread);
    } catch (const Error& e) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + name + ": " + e.what();
    }
  }
  return {ok, detail + " (limit 1e-2)"};
}

Outcome gradient_check() {
  VectorFieldModel model({3, 64, 64, 64, 2}, 17);
  const auto data = gen_checkerboard(500, 2);
  Rng rng(3);
  const Eigen::Index b = 32;
  Matrix x1(b, 2), x0(b, 2);
  std::vector<double> t;
  for (Eigen::Index i = 0; i < b; ++i) {
    x1.row(i) = data.points().row(static_cast<Eigen::Index>(rng.below(data.n())));
    x0(i, 0) = rng.normal();
    x0(i, 1) = rng.normal();
    t.push_back(rng.uniform() * 0.999);
  }
  const auto s = Schedule::si();
  const auto lg = cfm_loss_batch(model, s, x1, x0, t);
  double worst = 0.0;
  std::size_t start = 0;
  const auto& sizes = model.sizes();
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t count = sizes[l + 1] * (sizes[l] + 1);
    for (int k = 0; k < 8; ++k) {
      const std::size_t idx = start + rng.below(count);
      VectorFieldModel plus = model, minus = model;
      const double h = 1e-5;
      plus.params()[idx] += h;
      minus.params()[idx] -= h;
      const double fd = (cfm_loss_batch(plus, s, x1, x0, t).loss - cfm_loss_batch(minus, s, x1, x0, t).loss) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(lg.grad[idx]), 1e-6});
      worst = std::max(worst, std::abs(fd - lg.grad[idx]) / scale);
    }
    start += count;
  }

  // zero model: loss = mean |m' x0 + a' x1|^2 whose expectation is d * mean(m'^2 + a'^2)
  const auto big = gen_checkerboard(4000, 8);
  Rng draw(21);
  const Eigen::Index nb = 40000;
  Matrix y1(nb, 2), y0(nb, 2);
  std::vector<double> tt;
  for (Eigen::Index i = 0; i < nb; ++i) {
    y1.row(i) = big.points().row(static_cast<Eigen::Index>(draw.below(big.n())));
    y0(i, 0) = draw.normal();
    y0(i, 1) = draw.normal();
    tt.push_back(draw.uniform() * 0.999);
  }
  std::string zero_detail;
  bool zero_ok = true;
  for (const auto& sched : {Schedule::cond_ot(), Schedule::si()}) {
    const double loss = cfm_loss_batch(VectorFieldModel::zeros(), sched, y1, y0, tt).loss;
    double expect = 0.0, sum = 0.0, sum2 = 0.0;
    for (Eigen::Index i = 0; i < nb; ++i) {
      const auto v = sched.eval(tt[static_cast<std::size_t>(i)]);
      expect += 2.0 * (v.dm * v.dm + v.da * v.da);
      const double z = (v.dm * y0.row(i) + v.da * y1.row(i)).squaredNorm();
      sum += z;
      sum2 += z * z;
    }
    const double n = static_cast<double>(nb);
    expect /= n;
    const double se = std::sqrt((sum2 / n - (sum / n) * (sum / n)) / n);
    zero_ok = zero_ok && std::abs(loss - expect) < 3 * se;
    zero_detail += fmt("; zero model %s: loss %.4f vs %.4f (3 SE = %.4f)", sched.name().c_str(), loss, expect, 3 * se);
  }
  return {worst < 1e-5 && zero_ok, fmt("max rel grad error %.2e over 32 params in 4 layers", worst) + zero_detail};
}

Outcome checkerboard_direction() {
  const auto data = gen_checkerboard(1000, 1);
  // Small k leaves gamma < 0 near pi/2 (noise in 1 - lambda is amplified by
  // 1/cos^2), which the optimizer exploits to drive the energy negative.
  const auto est = estimate_lambda(data, default_theta_grid(), 64, 1);
  double min_gamma = INFINITY;
  {
    const LambdaCurve curve(est);
    for (double th = 1e-3; th < kHalfPi; th += 1e-3) min_gamma = std::min(min_gamma, gamma(curve, th));
  }
  DirectOptions o;
  o.seed = 1;
  const auto ko_sol = optimize_direct(est, o);
  const auto ko_rep = ke(ko_sol.schedule, est);
  const auto ot_rep = ke(Schedule::cond_ot(), est);
  const double margin = ot_rep.ke - ko_rep.ke;

  TrainConfig cfg;
  cfg.seed = 5;
  cfg.schedule = Schedule::cond_ot();
  const auto ot_model = train(data, cfg);
  cfg.schedule = ko_sol.schedule;
  const auto ko_model = train(data, cfg);
  const double ot_mke = model_ke(ot_model.model, 100, 4000, 9);
  const double ko_mke = model_ke(ko_model.model, 100, 4000, 9);

  // side numbers, not criteria
  const auto held = sample_checkerboard(2000, 77);
  const double noise_gap = energy_distance(sample_euler(VectorFieldModel::zeros(), 2000, 1, 13), held);
  std::string trend;
  for (std::size_t nfe : {2u, 6u, 10u, 16u, 100u})
    trend += fmt("%s%zu:%.4f", trend.empty() ? "" : " ", nfe,
                 energy_distance(sample_euler(ko_model.model, 2000, nfe, 13), held));
  const double loss_ratio = smoothed_tail(ot_model.loss_trace) / smoothed_head(ot_model.loss_trace);
  const double ot_dist = energy_distance(sample_euler(ot_model.model, 2000, 100, 13), held);
  std::cout << "INFO C8 energy distance vs nfe (ko model): " << trend << fmt("; cond-ot model at 100: %.4f", ot_dist) << "; noise baseline " << fmt("%.4f", noise_gap)
            << "\nINFO C8 cond-ot training loss tail/head = " << fmt("%.3f", loss_ratio)
            << fmt(" (floor d*(cke-ke) = %.3f)", 2 * ot_rep.gap) << '\n';

  const bool ok = margin > 0 && ko_rep.ke >= 0 && ko_mke <= ot_mke + 0.05;
  return {ok, fmt("functional KE: ko %.4f < cond-ot %.4f (margin %.4f, min gamma %.3f); model_ke: ko %.4f vs "
                  "cond-ot %.4f + 0.05",
                  ko_rep.ke, ot_rep.ke, margin, min_gamma, ko_mke, ot_mke)};
}

Outcome high_dimension_trend() {
  std::vector<double> devs;
  std::string detail;
  for (std::size_t d : {8u, 64u, 512u}) {
    const auto data = gen_gaussian(256, d, 9);
    const auto est = estimate_lambda(data, default_theta_grid(), 4, 2);
    DirectOptions o;
    o.seed = 2;
    const auto sol = optimize_direct(est, o);
    devs.push_back(max_dev_from_identity(sol.schedule));
    detail += fmt("%sd=%zu: max|a-t| = %.4f (b = %.3f)", detail.empty() ? "" : "; ", d, devs.back(), sol.b);
  }
  const bool ok = devs[0] > devs[1] && devs[1] > devs[2] && devs[2] < 0.05;
  return {ok, detail};
}

int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  const auto data = gen_checkerboard(400, 3);
  const auto grid = default_theta_grid();
  const auto one = estimate_lambda(data, grid, 4, 8, 1);
  const auto four = estimate_lambda(data, grid, 4, 8, 4);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) worst = std::max(worst, std::abs(one.lambda()[i] - four.lambda()[i]));
  std::string detail = fmt("lam_hat 1 vs 4 threads: max diff %.1e", worst);
  bool ok = worst < 1e-10;
  if (cli.empty()) return {ok, detail + "; CLI not given, stage reproducibility skipped"};

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"data.bin", "gen --kind checkerboard --n 1000 --seed 6 --out {}/data.bin"},
      {"lambda.csv", "lambda --data {}/data.bin --k 2 --seed 6 --threads 2 --out {}/lambda.csv"},
      {"ko.json", "optimize --lambda {}/lambda.csv --iters 100 --restarts 2 --seed 6 --threads 2 --out {}/ko.json"},
      {"shoot.json", "optimize --lambda {}/lambda.csv --method shoot --out {}/shoot.json"},
      {"ko.csv", "schedule --kind ko --ko {}/ko.json --out {}/ko.csv"},
      {"energy.json", "energy --schedule {}/ko.json --lambda {}/lambda.csv --out {}/energy.json"},
      {"verify.json", "verify --data {}/data.bin --lambda {}/lambda.csv --all --out {}/verify.json"},
      {"model.bin", "train2d --data {}/data.bin --schedule {}/ko.csv --steps 100 --seed 6 --out {}/model.bin"},
      {"samples.csv", "sample --model {}/model.bin --nfe 8 --n 1000 --seed 6 --threads 2 --out {}/samples.csv"},
      {"lambda.svg", "plot --lambda {}/lambda.csv --out {}/lambda.svg"},
  };
  std::size_t same = 0, ran = 0;
  std::vector<std::string> bad;
  fs::remove_all(work);
  for (const char* run : {"r1", "r2"}) fs::create_directories(work / run);
  for (const auto& [file, pattern] : stages) {
    int codes[2];
    for (int r = 0; r < 2; ++r) {
      std::string args = pattern, dir = (work / (r == 0 ? "r1" : "r2")).string();
      for (auto p = args.find("{}"); p != std::string::npos; p = args.find("{}")) args.replace(p, 2, dir);
      codes[r] = run_cli(cli, args);
    }
    // shooting may legitimately refuse a checkerboard estimate (gamma <= 0); that refusal must repeat too
    if (codes[0] != codes[1] || (codes[0] != 0 && file != "shoot.json")) {
      bad.push_back(file + fmt("(exit %d/%d)", codes[0], codes[1]));
      continue;
    }
    if (codes[0] != 0) continue;
    ++ran;
    if (slurp(work / "r1" / file) == slurp(work / "r2" / file) &&
        slurp(work / "r1" / (file + ".manifest.json")).size() > 0)
      ++same;
    else
      bad.push_back(file);
  }
  ok = ok && bad.empty();
  detail += fmt("; %zu/%zu CLI outputs byte-identical across reruns", same, ran);
  for (const auto& b : bad) detail += " [" + b + "]";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  std::set<std::string> only;
  fs::path work = fs::temp_directory_path() / "kopath_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string item; std::getline(ss, item, ',');) only.insert(item);
    } else {
      std::cerr << "usage: kopath_acceptance [--cli PATH] [--only C1,C2] [--work DIR]\n";
      return 2;
    }
  }

  const std::vector<std::tuple<std::string, std::string, std::function<Outcome()>>> criteria = {
      {"C1", "gaussian separation oracle", gaussian_lambda},
      {"C2", "two-point separation oracle", two_point_lambda},
      {"C3", "cond-ot recovery", cond_ot_recovery},
      {"C4", "energy identities", energy_identities},
      {"C5", "bounds and squeeze", theorem_suite},
      {"C6", "first-integral conservation", conservation},
      {"C7", "flow-matching gradients", gradient_check},
      {"C8", "checkerboard kinetic comparison", checkerboard_direction},
      {"C9", "high-dimension trend", high_dimension_trend},
      {"C10", "determinism", [&] { return determinism(cli, work); }},
  };

  int failures = 0;
  for (const auto& [id, title, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out.pass) ++failures;
    std::cout << id << ' ' << (out.pass ? "PASS" : "FAIL") << "  " << title << ": " << out.detail
              << fmt(" [%.1f s]", secs) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
