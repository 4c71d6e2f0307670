#include "pignn/csv_io.hpp"
#include "pignn/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace pignn;

namespace {

std::vector<eikonal::Cell> to_cells(const std::vector<std::pair<int, int>>& cells) {
  std::vector<eikonal::Cell> out;
  for (const auto& [ix, iy] : cells) out.push_back({ix, iy});
  return out;
}

py::dict fit_to_dict(const crm::FitResult& fit) {
  py::dict d;
  d["tau"] = fit.params.tau;
  d["J"] = fit.params.productivity;
  d["F"] = fit.params.connectivity;
  d["objective"] = fit.objective;
  d["successful_restarts"] = fit.successful_restarts;
  return d;
}

}  // namespace

PYBIND11_MODULE(_pignn, m) {
  m.doc() = "Well-network forecasting core: CRM, eikonal graphs, synthetic truth and the benchmark pipeline";

  py::register_exception<Error>(m, "PignnError", PyExc_RuntimeError);

  py::class_<TimeSeriesPanel>(m, "Panel")
      .def(py::init<>())
      .def_readwrite("times", &TimeSeriesPanel::times)
      .def_readwrite("injection", &TimeSeriesPanel::injection)
      .def_readwrite("injector_bhp", &TimeSeriesPanel::injector_bhp)
      .def_readwrite("production", &TimeSeriesPanel::production)
      .def_readwrite("producer_bhp", &TimeSeriesPanel::producer_bhp)
      .def_readwrite("injector_ids", &TimeSeriesPanel::injector_ids)
      .def_readwrite("producer_ids", &TimeSeriesPanel::producer_ids)
      .def_property_readonly("rows", &TimeSeriesPanel::rows)
      .def("validate", &TimeSeriesPanel::validate)
      .def("slice", &TimeSeriesPanel::slice);

  m.def("read_panel", [](const std::filesystem::path& p) { return io::read_panel(p); });
  m.def("write_panel", [](const std::filesystem::path& p, const TimeSeriesPanel& panel) { io::write_panel(p, panel); });
  m.def("read_connectivity", [](const std::filesystem::path& p) { return io::read_connectivity(p).values; });

  m.def(
      "split_panel",
      [](Eigen::Index rows, double train, double validation, double test) {
        const auto s = split_panel(rows, {train, validation, test});
        return py::make_tuple(py::make_tuple(s.train.begin, s.train.end),
                              py::make_tuple(s.validation.begin, s.validation.end),
                              py::make_tuple(s.test.begin, s.test.end));
      },
      py::arg("rows"), py::arg("train") = 0.70, py::arg("validation") = 0.05, py::arg("test") = 0.25);
  m.def("total_rmse", [](const std::vector<double>& v) { return total_rmse(v); });
  m.def("pearson", &pearson);

  py::class_<crm::CrmParams>(m, "CrmParams")
      .def(py::init([](Vector tau, Vector j, Matrix f) {
             crm::CrmParams p{std::move(tau), std::move(j), std::move(f)};
             p.validate();
             return p;
           }),
           py::arg("tau"), py::arg("J"), py::arg("F"))
      .def_readwrite("tau", &crm::CrmParams::tau)
      .def_readwrite("J", &crm::CrmParams::productivity)
      .def_readwrite("F", &crm::CrmParams::connectivity)
      .def("pore_volume", &crm::CrmParams::pore_volume);
  m.def("reference_crm_params", &pipeline::reference_crm_params);

  m.def(
      "crm_forecast",
      [](const crm::CrmParams& p, Vector times, Matrix injection, Matrix bhp, const Vector& q0) {
        return crm::crm_forecast(p, {std::move(times), std::move(injection), std::move(bhp)}, q0);
      },
      py::arg("params"), py::arg("times"), py::arg("injection"), py::arg("producer_bhp"), py::arg("q0"));
  m.def(
      "integrate_crm_ode",
      [](const crm::CrmParams& p, Vector times, Matrix injection, Matrix bhp, const Vector& q0, double substep) {
        return crm::integrate_crm_ode(p, {std::move(times), std::move(injection), std::move(bhp)}, q0, substep);
      },
      py::arg("params"), py::arg("times"), py::arg("injection"), py::arg("producer_bhp"), py::arg("q0"),
      py::arg("substep") = 1e-3);
  m.def(
      "crm_fit",
      [](const TimeSeriesPanel& panel, double ct, int multistarts, std::uint64_t seed) {
        crm::FitOptions o;
        o.multistarts = multistarts;
        o.seed = seed;
        crm::FitResult fit;
        {
          py::gil_scoped_release release;
          fit = crm::crm_fit(panel, split_panel(panel), ct, o);
        }
        return fit_to_dict(fit);
      },
      py::arg("panel"), py::arg("ct") = 1e-5, py::arg("multistarts") = 8, py::arg("seed") = 20240601);

  m.def(
      "solve_eikonal",
      [](Matrix speed, double dx, double dy, const std::vector<std::pair<int, int>>& sources,
         double seed_radius) {
        const eikonal::SpeedField f{std::move(speed), dx, dy};
        const auto cells = to_cells(sources);
        return eikonal::solve_eikonal(f, cells, {seed_radius}).time;
      },
      py::arg("speed"), py::arg("dx") = 1.0, py::arg("dy") = 1.0, py::arg("sources"),
      py::arg("seed_radius") = 8.0);
  m.def(
      "build_graph",
      [](const std::filesystem::path& grid_dir, const std::filesystem::path& wells, int k, int sectors) {
        eikonal::GraphBuildConfig c;
        c.k = k;
        c.sectors = sectors;
        return eikonal::build_graph(eikonal::read_grid(grid_dir), io::read_wells(wells), c).adjacency.values;
      },
      py::arg("grid_dir"), py::arg("wells"), py::arg("k") = 1, py::arg("sectors") = 4);

  m.def(
      "generate_crm_world",
      [](const crm::CrmParams& p, double horizon, double step, const Vector& q0, double noise, std::uint64_t seed) {
        auto s = synth::default_schedule(horizon, step);
        s.injection.resize(static_cast<std::size_t>(p.connectivity.rows()), s.injection.back());
        s.producer_bhp = Vector::Constant(p.tau.size(), 1000.0);
        return synth::generate_crm_world(p, s, q0, noise, seed).panel;
      },
      py::arg("params"), py::arg("horizon") = 2000.0, py::arg("step") = 10.0, py::arg("q0"),
      py::arg("noise") = 0.0, py::arg("seed") = 1);

  m.def(
      "gradcheck",
      [](const std::string& mode, bool physics, std::uint64_t seed) {
        gnn::ModelConfig mc;
        mc.mode = gnn::graph_mode_from_string(mode);
        gnn::LossConfig lc;
        if (!physics) lc.lambda_f = 0.0;
        pipeline::GradcheckSummary r;
        {
          py::gil_scoped_release release;
          r = pipeline::run_gradcheck_fixture(mc, lc, seed);
        }
        py::dict d;
        d["loss_error"] = r.loss_error;
        d["mixed_error"] = r.mixed_error;
        d["parameters"] = r.parameters;
        return d;
      },
      py::arg("mode") = "self-learned", py::arg("physics") = true, py::arg("seed") = 1000);

  m.def(
      "run_stage",
      [](const std::string& name, const std::string& config_json) {
        const auto cfg = pipeline::Json::parse(config_json);
        std::ostringstream log;
        int status = 0;
        {
          py::gil_scoped_release release;
          status = pipeline::run_stage(name, cfg, log);
        }
        return py::make_tuple(status, log.str());
      },
      py::arg("name"), py::arg("config_json"),
      "Runs one pipeline stage on a JSON config string; returns (exit status, log text).");
}
