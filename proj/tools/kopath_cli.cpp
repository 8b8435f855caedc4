#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kopath/kopath.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised after outputs are written when a check did not pass.
struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fnv1a64(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "missing";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

json file_list(const std::vector<fs::path>& paths) {
  json arr = json::array();
  for (const auto& p : paths) arr.push_back({{"path", p.string()}, {"fnv1a64", fnv1a64(p)}});
  return arr;
}

struct Run {
  std::string command;
  json options = json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;  // outputs[0] is the primary output
  std::uint64_t seed = 0;
  unsigned threads = 1;
  json metrics = json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write_manifest() const {
    if (outputs.empty()) return;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json m = {{"command", command},         {"options", options},
              {"inputs", file_list(inputs)}, {"outputs", file_list(outputs)},
              {"seed", seed},               {"threads", threads},
              {"wall_clock_seconds", wall}, {"version", KOPATH_VERSION}};
    if (!metrics.empty()) m["metrics"] = metrics;
    const fs::path path = outputs.front().string() + ".manifest.json";
    std::ofstream out(path);
    if (!out) kopath::fail(kopath::ErrorKind::IoError, "cannot write " + path.string());
    out << m.dump(2) << '\n';
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) kopath::fail(kopath::ErrorKind::IoError, "cannot write " + path.string());
  out << text;
}

bool is_builtin_schedule(const std::string& name) {
  return name == "condot" || name == "cond-ot" || name == "si" || name == "ddpm";
}

// A schedule given either by built-in name, a ko.json solution or an exported CSV.
kopath::Schedule resolve_schedule(const std::string& spec, Run& run) {
  if (spec == "condot" || spec == "cond-ot") return kopath::Schedule::cond_ot();
  if (spec == "si") return kopath::Schedule::si();
  if (spec == "ddpm") return kopath::Schedule::ddpm();
  const fs::path p(spec);
  if (!fs::exists(p)) throw UsageError("schedule '" + spec + "' is neither a built-in name nor a file");
  run.inputs.push_back(p);
  if (p.extension() == ".json") return kopath::load_solution(p).schedule;
  return kopath::load_schedule(p);
}

json report_json(const kopath::BoundReport& r) {
  return {{"quantity", r.quantity}, {"value", r.value}, {"bound", r.bound}, {"tolerance", r.tolerance},
          {"margin", r.margin},     {"pass", r.pass},   {"note", r.note}};
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinetic-optimal Gaussian probability paths"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KOPATH_VERSION);

  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
  auto common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("--seed", seed, "Root seed")->capture_default_str();
    sub->add_option("--threads", threads, "Worker cap (0: KOPATH_THREADS or all cores)")->capture_default_str();
    auto* o = sub->add_option("--out", out, "Primary output file");
    if (out_required) o->required();
  };

  // gen
  std::string gen_kind = "checkerboard";
  std::size_t n = 1000, d = 2;
  auto* gen = app.add_subcommand("gen", "Generate a normalized dataset (.bin or .csv)");
  gen->add_option("--kind", gen_kind)->check(CLI::IsMember({"checkerboard", "gaussian", "two-point"}))->capture_default_str();
  gen->add_option("--n", n, "Number of points")->capture_default_str();
  gen->add_option("--d", d, "Dimension (gaussian, two-point)")->capture_default_str();
  common(gen, true);

  // lambda
  std::string data_path;
  std::size_t k = 100, grid = 101;
  auto* lam = app.add_subcommand("lambda", "Estimate the separation function on a theta grid");
  lam->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  lam->add_option("--k", k, "Noise draws per data point")->capture_default_str();
  lam->add_option("--grid", grid, "Theta grid nodes")->capture_default_str();
  common(lam, true);

  // optimize
  std::string lambda_path, method = "direct";
  std::size_t iters = 1500, restarts = 4;
  auto* opt = app.add_subcommand("optimize", "Find the kinetic-optimal schedule for a lambda estimate");
  opt->add_option("--lambda", lambda_path)->required()->check(CLI::ExistingFile);
  opt->add_option("--method", method)->check(CLI::IsMember({"direct", "shoot", "shooting"}))->capture_default_str();
  opt->add_option("--iters", iters, "Adam iterations (direct)")->capture_default_str();
  opt->add_option("--restarts", restarts, "Random restarts (direct)")->capture_default_str();
  common(opt, true);

  // energy
  std::string schedule_spec;
  std::size_t nodes = 1001;
  auto* en = app.add_subcommand("energy", "Kinetic energy of a schedule under a lambda estimate");
  en->add_option("--schedule", schedule_spec, "condot|si|ddpm, ko.json or schedule CSV")->required();
  en->add_option("--lambda", lambda_path)->required()->check(CLI::ExistingFile);
  en->add_option("--nodes", nodes, "Quadrature nodes")->capture_default_str();
  common(en, true);

  // verify
  bool verify_all = false;
  std::size_t verify_k = 32;
  auto* ver = app.add_subcommand("verify", "Numeric checks of the energy bounds on a dataset");
  ver->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  ver->add_option("--lambda", lambda_path, "Reuse an estimate instead of computing one")->check(CLI::ExistingFile);
  ver->add_option("--k", verify_k, "Noise draws per data point")->capture_default_str();
  ver->add_option("--grid", grid, "Theta grid nodes")->capture_default_str();
  ver->add_flag("--all", verify_all, "Also run the dataset-independent checks");
  common(ver, false);

  // schedule
  std::string kind = "condot", ko_path;
  double beta0 = 0.1, beta1 = 20.0;
  auto* sch = app.add_subcommand("schedule", "Export a schedule as CSV");
  sch->add_option("--kind", kind)->check(CLI::IsMember({"condot", "si", "ddpm", "ko"}))->capture_default_str();
  sch->add_option("--ko", ko_path, "Solution file for --kind ko")->check(CLI::ExistingFile);
  sch->add_option("--beta0", beta0)->capture_default_str();
  sch->add_option("--beta1", beta1)->capture_default_str();
  sch->add_option("--nodes", nodes, "Grid points")->capture_default_str();
  common(sch, true);

  // train2d
  std::size_t steps = 5000, batch = 256;
  double lr = 1e-3;
  auto* tr = app.add_subcommand("train2d", "Train a flow-matching model");
  tr->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  tr->add_option("--schedule", schedule_spec, "condot|si|ddpm, ko.json or schedule CSV")->required();
  tr->add_option("--steps", steps)->capture_default_str();
  tr->add_option("--batch", batch)->capture_default_str();
  tr->add_option("--lr", lr)->capture_default_str();
  common(tr, true);

  // sample
  std::string model_path;
  std::size_t nfe = 100, n_samples = 2000;
  auto* sa = app.add_subcommand("sample", "Draw samples from a trained model with Euler steps");
  sa->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  sa->add_option("--nfe", nfe)->capture_default_str()->check(CLI::PositiveNumber);
  sa->add_option("--n", n_samples)->capture_default_str();
  sa->add_option("--data", data_path, "Reference data for the energy distance")->check(CLI::ExistingFile);
  common(sa, true);

  // plot
  std::vector<std::string> lambda_files, schedule_specs;
  std::string title;
  auto* pl = app.add_subcommand("plot", "Render lambda or schedule curves as SVG");
  pl->add_option("--lambda", lambda_files, "Lambda CSV files")->check(CLI::ExistingFile);
  pl->add_option("--schedule", schedule_specs, "Schedules (names or files)");
  pl->add_option("--title", title);
  common(pl, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << '\n';
    return 2;
  }

  Run run;
  run.seed = seed;
  run.threads = kopath::resolve_threads(threads);
  const unsigned nthreads = run.threads;

  try {
    if (gen->parsed()) {
      run.command = "gen";
      run.options = {{"kind", gen_kind}, {"n", n}, {"d", d}};
      kopath::Dataset data = gen_kind == "checkerboard" ? kopath::gen_checkerboard(n, seed)
                             : gen_kind == "gaussian"   ? kopath::gen_gaussian(n, d, seed)
                                                        : kopath::gen_two_point(d);
      kopath::save_dataset(data, out);
      run.outputs = {out};
    } else if (lam->parsed()) {
      run.command = "lambda";
      run.options = {{"data", data_path}, {"k", k}, {"grid", grid}};
      if (grid < 2) throw UsageError("--grid needs at least 2 nodes");
      const auto data = kopath::load_dataset(data_path);
      const auto est = kopath::estimate_lambda(data, kopath::default_theta_grid(grid), k, seed, nthreads);
      kopath::save_lambda(est, out);
      run.inputs = {data_path};
      run.outputs = {out, out + ".json"};
    } else if (opt->parsed()) {
      run.command = "optimize";
      run.options = {{"lambda", lambda_path}, {"method", method}, {"iters", iters}, {"restarts", restarts}};
      const auto est = kopath::load_lambda(lambda_path);
      kopath::KOSolution sol;
      if (kopath::parse_method(method) == kopath::KOMethod::Shooting) {
        sol = kopath::shoot_b(est);
      } else {
        kopath::DirectOptions o;
        o.iters = iters;
        o.restarts = restarts;
        o.seed = seed;
        o.threads = nthreads;
        sol = kopath::optimize_direct(est, o);
      }
      kopath::save_solution(sol, out);
      run.inputs = {lambda_path};
      run.outputs = {out};
      run.metrics = {{"b", sol.b}, {"final_energy", sol.final_energy}};
    } else if (en->parsed()) {
      run.command = "energy";
      run.options = {{"schedule", schedule_spec}, {"lambda", lambda_path}, {"nodes", nodes}};
      const auto s = resolve_schedule(schedule_spec, run);
      const auto est = kopath::load_lambda(lambda_path);
      run.inputs.push_back(lambda_path);
      kopath::TrimmedRule rule;
      rule.nodes = nodes;
      json rep;
      bool consistent = true;
      try {
        const auto r = kopath::ke(s, est, rule);
        rep = {{"schedule", s.name()}, {"cke", r.cke},     {"ke", r.ke},
               {"ke_cartesian", r.ke_cartesian}, {"gap", r.gap}, {"nodes", r.nodes},
               {"gamma_flags", r.gamma_flags},   {"min_gamma", r.min_gamma}, {"consistent", true}};
      } catch (const kopath::Error& e) {
        if (e.kind() != kopath::ErrorKind::Inconsistent) throw;
        consistent = false;
        rep = {{"schedule", s.name()},
               {"cke", kopath::cke(s, rule)},
               {"ke", finite_or_null(kopath::ke_polar(s, est, rule))},
               {"consistent", false},
               {"error", e.what()}};
      }
      write_text(out, rep.dump(2) + "\n");
      run.outputs = {out};
      run.metrics = rep;
      if (!consistent) {
        run.write_manifest();
        throw CheckFailed("polar and Cartesian kinetic energies disagree");
      }
    } else if (ver->parsed()) {
      run.command = "verify";
      run.options = {{"data", data_path}, {"lambda", lambda_path}, {"k", verify_k}, {"grid", grid}, {"all", verify_all}};
      const auto data = kopath::load_dataset(data_path);
      run.inputs = {data_path};
      kopath::LambdaEstimate est;
      if (!lambda_path.empty()) {
        est = kopath::load_lambda(lambda_path);
        run.inputs.push_back(lambda_path);
        if (est.n_data() != 0 && est.n_data() != data.n())
          throw UsageError("lambda estimate was computed on a dataset of a different size");
      } else {
        est = kopath::estimate_lambda(data, kopath::default_theta_grid(grid), verify_k, seed, nthreads);
      }
      std::vector<kopath::BoundReport> reports;
      reports.push_back(kopath::check_lambda_bound(data, est));
      reports.push_back(kopath::check_gamma_condition(est));
      const std::vector<kopath::Schedule> builtins = {kopath::Schedule::cond_ot(), kopath::Schedule::si(),
                                                      kopath::Schedule::ddpm()};
      bool snr_ok = true;
      try {
        for (auto& r : kopath::check_ke_squeeze(data, builtins, est)) reports.push_back(std::move(r));
      } catch (const kopath::Error& e) {
        if (e.kind() != kopath::ErrorKind::SnrNotMonotone) throw;
        snr_ok = false;
        reports.push_back(kopath::make_report("snr_monotone", 1.0, 0.0, 0.0, e.what()));
      }
      if (verify_all) {
        reports.push_back(kopath::check_eta_integral());
        for (double t : {0.5, 1.0, 2.0, 3.0, 5.0, 10.0})
          reports.push_back(kopath::make_report("eta(" + short_number(t) + ")", kopath::eta(t),
                                                kopath::eta_bound(t), 0.0));
        for (const auto& s : builtins) {
          const auto c = kopath::check_schedule(s);
          reports.push_back(kopath::make_report("boundary_defect[" + s.name() + "]", c.boundary_defect, 0.0,
                                                c.tolerance, c.snr_increasing ? "snr increasing" : "snr not increasing"));
        }
      }
      json arr = json::array();
      bool all_pass = snr_ok;
      for (const auto& r : reports) {
        arr.push_back(report_json(r));
        all_pass = all_pass && r.pass;
      }
      const std::string text = arr.dump(2) + "\n";
      std::cout << text;
      if (!out.empty()) {
        write_text(out, text);
        run.outputs = {out};
      }
      run.metrics = {{"all_pass", all_pass}, {"reports", reports.size()}};
      if (!all_pass) {
        run.write_manifest();
        throw CheckFailed("one or more checks failed");
      }
    } else if (sch->parsed()) {
      run.command = "schedule";
      run.options = {{"kind", kind}, {"ko", ko_path}, {"beta0", beta0}, {"beta1", beta1}, {"nodes", nodes}};
      kopath::Schedule s = kopath::Schedule::cond_ot();
      if (kind == "ko") {
        if (ko_path.empty()) throw UsageError("--kind ko needs --ko FILE");
        s = kopath::load_solution(ko_path).schedule;
        run.inputs = {ko_path};
      } else if (!ko_path.empty()) {
        throw UsageError("--ko only applies to --kind ko");
      } else if (kind == "si") {
        s = kopath::Schedule::si();
      } else if (kind == "ddpm") {
        s = kopath::Schedule::ddpm(beta0, beta1);
      }
      kopath::save_schedule(s, out, nodes);
      run.outputs = {out};
    } else if (tr->parsed()) {
      run.command = "train2d";
      run.options = {{"data", data_path}, {"schedule", schedule_spec}, {"steps", steps}, {"batch", batch}, {"lr", lr}};
      const auto data = kopath::load_dataset(data_path);
      run.inputs = {data_path};
      kopath::TrainConfig cfg;
      cfg.schedule = resolve_schedule(schedule_spec, run);
      cfg.steps = steps;
      cfg.batch = batch;
      cfg.lr = lr;
      cfg.seed = seed;
      const auto res = kopath::train(data, cfg);
      kopath::save_model(res.model, out);
      std::string trace = "step,loss\n";
      char line[64];
      for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.17g\n", i, res.loss_trace[i]);
        trace += line;
      }
      write_text(out + ".loss.csv", trace);
      run.outputs = {out, out + ".loss.csv"};
      if (!res.loss_trace.empty())
        run.metrics = {{"loss_head", kopath::smoothed_head(res.loss_trace)},
                       {"loss_tail", kopath::smoothed_tail(res.loss_trace)}};
    } else if (sa->parsed()) {
      run.command = "sample";
      run.options = {{"model", model_path}, {"nfe", nfe}, {"n", n_samples}, {"data", data_path}};
      const auto model = kopath::load_model(model_path);
      run.inputs = {model_path};
      const auto samples = kopath::sample_euler(model, n_samples, nfe, seed, nthreads);
      kopath::save_points(samples, out, kopath::format_for(out));
      run.outputs = {out};
      if (!data_path.empty()) {
        const auto data = kopath::load_dataset(data_path);
        run.inputs.push_back(data_path);
        run.metrics = {{"energy_distance", kopath::energy_distance(samples, data.points(), nthreads)}};
      }
    } else if (pl->parsed()) {
      run.command = "plot";
      run.options = {{"lambda", lambda_files}, {"schedule", schedule_specs}, {"title", title}};
      if (lambda_files.empty() == schedule_specs.empty())
        throw UsageError("plot needs either --lambda or --schedule inputs");
      std::vector<kopath::Series> series;
      kopath::PlotStyle style;
      style.title = title;
      if (!lambda_files.empty()) {
        style.x_label = "theta";
        style.y_label = "lambda";
        for (const auto& f : lambda_files) {
          const auto est = kopath::load_lambda(f);
          run.inputs.push_back(f);
          series.push_back({fs::path(f).stem().string(), est.theta(), est.lambda()});
        }
      } else {
        style.x_label = "t";
        style.y_label = "coefficient";
        const auto grid_t = kopath::unit_grid(201);
        for (const auto& spec : schedule_specs) {
          const auto s = resolve_schedule(spec, run);
          const std::string label = is_builtin_schedule(spec) ? s.name() : fs::path(spec).stem().string();
          kopath::Series a{label + " a", grid_t, {}}, m{label + " m", grid_t, {}};
          for (double t : grid_t) {
            const auto v = s.eval(t);
            a.y.push_back(v.a);
            m.y.push_back(v.m);
          }
          series.push_back(std::move(a));
          series.push_back(std::move(m));
        }
      }
      kopath::emit_plot(series, out, style);
      run.outputs = {out};
    }
    run.write_manifest();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << '\n';
    return 2;
  } catch (const CheckFailed& e) {
    std::cerr << "check failed: " << e.what() << '\n';
    return 1;
  } catch (const kopath::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
