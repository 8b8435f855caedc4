#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "kopath/kopath.hpp"

namespace py = pybind11;
using namespace kopath;

namespace {

using Release = py::call_guard<py::gil_scoped_release>;

py::dict report_dict(const BoundReport& r) {
  py::dict d;
  d["quantity"] = r.quantity;
  d["value"] = r.value;
  d["bound"] = r.bound;
  d["tolerance"] = r.tolerance;
  d["margin"] = r.margin;
  d["pass"] = r.pass;
  d["note"] = r.note;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kinetic-optimal Gaussian probability paths";

  py::register_exception<Error>(m, "KopathError", PyExc_RuntimeError);

  // datasets
  py::class_<Dataset>(m, "Dataset")
      .def_static("normalize", &Dataset::normalize, py::arg("points"))
      .def_property_readonly("points", &Dataset::points)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("d", &Dataset::d)
      .def("mean_defect", &Dataset::mean_defect)
      .def("average_variance", &Dataset::average_variance)
      .def("__len__", &Dataset::n)
      .def("__repr__", [](const Dataset& d) {
        return "<Dataset n=" + std::to_string(d.n()) + " d=" + std::to_string(d.d()) + ">";
      });
  m.def("gen_checkerboard", &gen_checkerboard, py::arg("n"), py::arg("seed") = 0);
  m.def("gen_gaussian", &gen_gaussian, py::arg("n"), py::arg("d"), py::arg("seed") = 0);
  m.def("gen_two_point", &gen_two_point, py::arg("d"));
  m.def("sample_checkerboard", &sample_checkerboard, py::arg("n"), py::arg("seed") = 0);
  m.def("save_dataset", &save_dataset, py::arg("data"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("path"));

  // separation
  py::class_<LambdaEstimate>(m, "LambdaEstimate")
      .def(py::init<std::vector<double>, std::vector<double>, std::size_t, std::size_t, std::uint64_t>(),
           py::arg("theta"), py::arg("lam"), py::arg("n_data") = 0, py::arg("k_noise") = 0, py::arg("seed") = 0)
      .def_property_readonly("theta", &LambdaEstimate::theta)
      .def_property_readonly("lam", &LambdaEstimate::lambda)
      .def_property_readonly("n_data", &LambdaEstimate::n_data)
      .def_property_readonly("k_noise", &LambdaEstimate::k_noise)
      .def_property_readonly("seed", &LambdaEstimate::seed)
      .def("__call__", &LambdaEstimate::value, py::arg("theta"));
  m.def("default_theta_grid", &default_theta_grid, py::arg("nodes") = 101);
  m.def("scale_of_theta", &scale_of_theta, py::arg("theta"));
  m.def(
      "estimate_lambda",
      [](const Dataset& data, std::optional<std::vector<double>> grid, std::size_t k, std::uint64_t seed,
         unsigned threads) {
        const auto g = grid ? *grid : default_theta_grid();
        return estimate_lambda(data, g, k, seed, threads);
      },
      py::arg("data"), py::arg("grid") = py::none(), py::arg("k") = 100, py::arg("seed") = 0, py::arg("threads") = 0,
      Release());
  m.def("lambda_gaussian", &lambda_gaussian, py::arg("s"));
  m.def("lambda_two_point", &lambda_two_point, py::arg("s"), py::arg("d"), py::arg("quad_order") = 200);
  m.def("save_lambda", &save_lambda, py::arg("est"), py::arg("path"));
  m.def("load_lambda", &load_lambda, py::arg("path"));

  py::class_<LambdaCurve>(m, "LambdaCurve")
      .def(py::init<const LambdaEstimate&>(), py::arg("est"))
      .def_static("unit", &LambdaCurve::unit)
      .def_static("gaussian", &LambdaCurve::gaussian)
      .def_static("from_function", &LambdaCurve::from_function, py::arg("of_theta"), py::arg("name") = "custom")
      .def_property_readonly("name", &LambdaCurve::name)
      .def("__call__", &LambdaCurve::operator(), py::arg("theta"))
      .def("complement", &LambdaCurve::complement, py::arg("theta"));
  py::implicitly_convertible<LambdaEstimate, LambdaCurve>();

  // schedules
  py::class_<Schedule>(m, "Schedule")
      .def_static("cond_ot", &Schedule::cond_ot)
      .def_static("si", &Schedule::si)
      .def_static("ddpm", &Schedule::ddpm, py::arg("beta0") = 0.1, py::arg("beta1") = 20.0)
      .def_static("tabulated", py::overload_cast<std::vector<double>, std::vector<double>, std::vector<double>>(
                                   &Schedule::tabulated),
                  py::arg("t"), py::arg("a"), py::arg("m"))
      .def_property_readonly("name", &Schedule::name)
      .def("eval",
           [](const Schedule& s, double t) {
             const auto v = s.eval(t);
             return py::make_tuple(v.a, v.m, v.da, v.dm);
           },
           py::arg("t"))
      .def("a", &Schedule::a, py::arg("t"))
      .def("m", &Schedule::m, py::arg("t"))
      .def("snr", [](const Schedule& s, double t) { return snr(s, t); }, py::arg("t"))
      .def("check", [](const Schedule& s, std::size_t nodes) {
             const auto c = check_schedule(s, nodes);
             py::dict d;
             d["boundary_defect"] = c.boundary_defect;
             d["min_value"] = c.min_value;
             d["snr_increasing"] = c.snr_increasing;
             d["tolerance"] = c.tolerance;
             d["ok"] = c.ok;
             return d;
           },
           py::arg("nodes") = 1001)
      .def("__repr__", [](const Schedule& s) { return "<Schedule " + s.name() + ">"; });
  m.def("save_schedule", &save_schedule, py::arg("schedule"), py::arg("path"), py::arg("nodes") = 1001);
  m.def("load_schedule", &load_schedule, py::arg("path"));

  // energies
  py::class_<EnergyReport>(m, "EnergyReport")
      .def_readonly("cke", &EnergyReport::cke)
      .def_readonly("ke", &EnergyReport::ke)
      .def_readonly("ke_cartesian", &EnergyReport::ke_cartesian)
      .def_readonly("gap", &EnergyReport::gap)
      .def_readonly("nodes", &EnergyReport::nodes)
      .def_readonly("gamma_flags", &EnergyReport::gamma_flags)
      .def_readonly("min_gamma", &EnergyReport::min_gamma);
  m.def("gamma", [](const LambdaCurve& lam, double theta) { return gamma(lam, theta); }, py::arg("lam"),
        py::arg("theta"));
  m.def(
      "cke", [](const Schedule& s, std::size_t nodes) { return cke(s, TrimmedRule{nodes, 1e-4}); },
      py::arg("schedule"), py::arg("nodes") = 1001);
  m.def(
      "ke",
      [](const Schedule& s, const LambdaCurve& lam, std::size_t nodes) { return ke(s, lam, TrimmedRule{nodes, 1e-4}); },
      py::arg("schedule"), py::arg("lam"), py::arg("nodes") = 1001);

  // kinetic-optimal schedules
  py::class_<KOSolution>(m, "KOSolution")
      .def_readonly("b", &KOSolution::b)
      .def_readonly("final_energy", &KOSolution::final_energy)
      .def_readonly("schedule", &KOSolution::schedule)
      .def_readonly("trace", &KOSolution::trace)
      .def_property_readonly("method", [](const KOSolution& s) { return to_string(s.method); });
  m.def(
      "optimize_direct",
      [](const LambdaCurve& lam, std::size_t iters, std::size_t restarts, std::uint64_t seed, unsigned threads) {
        DirectOptions o;
        o.iters = iters;
        o.restarts = restarts;
        o.seed = seed;
        o.threads = threads;
        return optimize_direct(lam, o);
      },
      py::arg("lam"), py::arg("iters") = 1500, py::arg("restarts") = 4, py::arg("seed") = 0, py::arg("threads") = 0,
      Release());
  m.def(
      "shoot_b", [](const LambdaCurve& lam) { return shoot_b(lam); }, py::arg("lam"), Release());
  m.def(
      "conserved_quantity",
      [](const KOSolution& sol, const LambdaCurve& lam) { return conserved_quantity(sol.curve, lam); },
      py::arg("solution"), py::arg("lam"));
  m.def("save_solution", &save_solution, py::arg("solution"), py::arg("path"));
  m.def("load_solution", &load_solution, py::arg("path"));

  // bounds
  m.def("eta", &eta, py::arg("t"), py::arg("order") = 200);
  m.def("eta_bound", &eta_bound, py::arg("t"));
  m.def("check_eta_integral", [] { return report_dict(check_eta_integral()); });
  m.def(
      "check_lambda_bound",
      [](const Dataset& data, const LambdaEstimate& est) { return report_dict(check_lambda_bound(data, est)); },
      py::arg("data"), py::arg("est"));
  m.def(
      "check_gamma_condition",
      [](const LambdaEstimate& est) { return report_dict(check_gamma_condition(est)); }, py::arg("est"));
  m.def(
      "check_ke_squeeze",
      [](const Dataset& data, const std::vector<Schedule>& schedules, const LambdaEstimate& est) {
        py::list out;
        for (const auto& r : check_ke_squeeze(data, schedules, est)) out.append(report_dict(r));
        return out;
      },
      py::arg("data"), py::arg("schedules"), py::arg("est"));

  // flow matching
  py::class_<VectorFieldModel>(m, "VectorFieldModel")
      .def(py::init<std::vector<std::size_t>, std::uint64_t>(),
           py::arg("sizes") = std::vector<std::size_t>{3, 64, 64, 64, 2}, py::arg("seed") = 0)
      .def_static("zeros", &VectorFieldModel::zeros, py::arg("sizes") = std::vector<std::size_t>{3, 64, 64, 64, 2})
      .def_property_readonly("sizes", &VectorFieldModel::sizes)
      .def_property_readonly("param_count", &VectorFieldModel::param_count)
      .def_property(
          "params", [](const VectorFieldModel& v) { return v.params(); },
          [](VectorFieldModel& v, const std::vector<double>& p) {
            if (p.size() != v.param_count()) fail(ErrorKind::BadShape, "parameter vector has the wrong length");
            v.params() = p;
          })
      .def("velocity", &VectorFieldModel::velocity, py::arg("t"), py::arg("x"));
  m.def(
      "train",
      [](const Dataset& data, const Schedule& schedule, std::size_t steps, std::size_t batch, double lr,
         std::uint64_t seed) {
        TrainConfig c;
        c.schedule = schedule;
        c.steps = steps;
        c.batch = batch;
        c.lr = lr;
        c.seed = seed;
        auto r = train(data, c);
        return std::make_pair(std::move(r.model), std::move(r.loss_trace));
      },
      py::arg("data"), py::arg("schedule"), py::arg("steps") = 5000, py::arg("batch") = 256, py::arg("lr") = 1e-3,
      py::arg("seed") = 0, Release());
  m.def(
      "sample_euler",
      [](const VectorFieldModel& model, std::size_t n, std::size_t nfe, std::uint64_t seed, unsigned threads) {
        return sample_euler(model, n, nfe, seed, threads);
      },
      py::arg("model"), py::arg("n"), py::arg("nfe"), py::arg("seed") = 0, py::arg("threads") = 0, Release());
  m.def(
      "model_ke",
      [](const VectorFieldModel& model, std::size_t nfe, std::size_t n_paths, std::uint64_t seed, unsigned threads) {
        return model_ke(model, nfe, n_paths, seed, threads);
      },
      py::arg("model"), py::arg("nfe") = 100, py::arg("n_paths") = 2000, py::arg("seed") = 0, py::arg("threads") = 0,
      Release());
  m.def("energy_distance", &energy_distance, py::arg("a"), py::arg("b"), py::arg("threads") = 0, Release());
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));
}
