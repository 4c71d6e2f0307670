#include "pignn/pipeline.hpp"

#include "pignn/csv_io.hpp"
#include "pignn/svg.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace pignn::pipeline {

namespace fs = std::filesystem;

namespace {

void allow_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (j.is_null()) return;
  if (!j.is_object()) throw Error(where + " config must be a JSON object");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw Error("unknown key '" + key + "' in " + where + " config");
  }
}

template <class T>
T get(const Json& j, const char* key, T fallback) {
  if (j.is_null() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  if (j.is_null() || !j.contains(key)) return empty;
  return j.at(key);
}

std::string required_path(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
    throw Error(where + " needs '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from(const Json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(r).size()) != cols) throw Error("matrix rows have different lengths");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

Json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json per_producer(const std::vector<std::string>& ids, const Vector& v) {
  Json out = Json::object();
  for (std::size_t j = 0; j < ids.size(); ++j) out[ids[j]] = v[static_cast<Eigen::Index>(j)];
  return out;
}

Vector window_rmse(const Matrix& observed, const Matrix& predicted, IndexRange rows) {
  Vector r(observed.cols());
  for (Eigen::Index j = 0; j < observed.cols(); ++j) {
    r[j] = rows.empty() ? std::nan("")
                        : rmse(Vector(observed.col(j).segment(rows.begin, rows.size())),
                               Vector(predicted.col(j).segment(rows.begin, rows.size())));
  }
  return r;
}

double vector_total(const Vector& v) {
  return total_rmse(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

bool physics_flag(const Json& j, bool fallback) {
  if (!j.contains("physics")) return fallback;
  const auto& v = j.at("physics");
  if (v.is_boolean()) return v.get<bool>();
  const auto s = v.get<std::string>();
  if (s == "on") return true;
  if (s == "off") return false;
  throw Error("physics must be on or off, got '" + s + "'");
}

TimeSeriesPanel clipped(TimeSeriesPanel panel, const Matrix& q) {
  panel.production = q.unaryExpr([](double v) { return std::isfinite(v) ? std::max(0.0, v) : 0.0; });
  return panel;
}

void write_table(std::ostream& log, const std::vector<std::string>& ids, const std::string& label,
                 const Vector& values) {
  log << std::left << std::setw(12) << label << std::right << std::fixed << std::setprecision(3);
  for (std::size_t j = 0; j < ids.size(); ++j) log << std::setw(12) << values[static_cast<Eigen::Index>(j)];
  log << std::setw(14) << vector_total(values) << '\n';
  log.unsetf(std::ios::floatfield);
}

}  // namespace

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

void write_json(const fs::path& path, const Json& value) { svg::write_text(path, value.dump(2) + "\n"); }

synth::ChannelFieldConfig channel_config(const Json& j) {
  allow_keys(j, {"nx", "ny", "dx", "dy", "thickness", "k_net", "k_bank", "phi", "channel_count", "channel_width",
                 "amplitude", "wavelength", "seed", "ct_per_psi", "viscosity_cp"},
             "grid");
  synth::ChannelFieldConfig c;
  c.nx = get(j, "nx", c.nx);
  c.ny = get(j, "ny", c.ny);
  c.dx = get(j, "dx", c.dx);
  c.dy = get(j, "dy", c.dy);
  c.thickness = get(j, "thickness", c.thickness);
  c.k_net = get(j, "k_net", c.k_net);
  c.k_bank = get(j, "k_bank", c.k_bank);
  c.phi = get(j, "phi", c.phi);
  c.channel_count = get(j, "channel_count", c.channel_count);
  c.channel_width = get(j, "channel_width", c.channel_width);
  c.amplitude = get(j, "amplitude", c.amplitude);
  c.wavelength = get(j, "wavelength", c.wavelength);
  c.seed = get(j, "seed", c.seed);
  c.fluid.total_compressibility = get(j, "ct_per_psi", c.fluid.total_compressibility);
  c.fluid.viscosity = get(j, "viscosity_cp", c.fluid.viscosity);
  c.validate();
  return c;
}

Json to_json(const synth::ChannelFieldConfig& c) {
  return {{"nx", c.nx}, {"ny", c.ny}, {"dx", c.dx}, {"dy", c.dy}, {"thickness", c.thickness},
          {"k_net", c.k_net}, {"k_bank", c.k_bank}, {"phi", c.phi}, {"channel_count", c.channel_count},
          {"channel_width", c.channel_width}, {"amplitude", c.amplitude}, {"wavelength", c.wavelength},
          {"seed", c.seed}, {"ct_per_psi", c.fluid.total_compressibility}, {"viscosity_cp", c.fluid.viscosity}};
}

synth::Schedule schedule_from_json(const Json& j, const synth::Schedule& base) {
  allow_keys(j, {"horizon", "step", "injection", "producer_bhp", "bhp_drift"}, "schedule");
  synth::Schedule s = base;
  s.horizon = get(j, "horizon", s.horizon);
  s.step = get(j, "step", s.step);
  if (j.contains("injection")) {
    s.injection.clear();
    for (const auto& well : j.at("injection")) {
      std::vector<synth::RateStep> steps;
      for (const auto& st : well) steps.push_back({st.at(0).get<double>(), st.at(1).get<double>()});
      s.injection.push_back(std::move(steps));
    }
  }
  auto per_well = [&](const char* key, Vector& target) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    target = v.is_number() ? Vector::Constant(target.size(), v.get<double>()) : vector_from(v);
  };
  per_well("producer_bhp", s.producer_bhp);
  if (j.contains("bhp_drift") && j.at("bhp_drift").is_number()) {
    s.bhp_drift = Vector::Constant(s.producer_bhp.size(), j.at("bhp_drift").get<double>());
  } else {
    per_well("bhp_drift", s.bhp_drift);
  }
  return s;
}

Json to_json(const synth::Schedule& s) {
  Json inj = Json::array();
  for (const auto& well : s.injection) {
    Json steps = Json::array();
    for (const auto& st : well) steps.push_back({st.start, st.rate});
    inj.push_back(steps);
  }
  Json out = {{"horizon", s.horizon}, {"step", s.step}, {"injection", inj},
              {"producer_bhp", vector_json(s.producer_bhp)}};
  if (s.bhp_drift.size()) out["bhp_drift"] = vector_json(s.bhp_drift);
  return out;
}

synth::SimulatorOptions simulator_options(const Json& j) {
  allow_keys(j, {"initial_pressure", "well_radius", "warmup"}, "simulator");
  synth::SimulatorOptions o;
  o.initial_pressure = get(j, "initial_pressure", o.initial_pressure);
  o.well_radius = get(j, "well_radius", o.well_radius);
  o.warmup = get(j, "warmup", o.warmup);
  return o;
}

Json to_json(const synth::SimulatorOptions& o) {
  return {{"initial_pressure", o.initial_pressure}, {"well_radius", o.well_radius}, {"warmup", o.warmup}};
}

eikonal::GraphBuildConfig graph_config(const Json& j) {
  allow_keys(j, {"k", "sectors", "seed_radius"}, "graph");
  eikonal::GraphBuildConfig g;
  g.k = get(j, "k", g.k);
  g.sectors = get(j, "sectors", g.sectors);
  g.eikonal.seed_radius_cells = get(j, "seed_radius", g.eikonal.seed_radius_cells);
  g.validate();
  return g;
}

SplitFractions split_fractions(const Json& j) {
  allow_keys(j, {"train", "validation", "test"}, "split");
  SplitFractions f;
  f.train = get(j, "train", f.train);
  f.validation = get(j, "validation", f.validation);
  f.test = get(j, "test", f.test);
  return f;
}

Json to_json(const SplitFractions& f) {
  return {{"train", f.train}, {"validation", f.validation}, {"test", f.test}};
}

gnn::ModelConfig model_config(const Json& j) {
  allow_keys(j, {"gcn_width", "hidden_width", "hidden_layers", "use_injector_bhp", "graph_mode"}, "model");
  gnn::ModelConfig c;
  c.gcn_width = get(j, "gcn_width", c.gcn_width);
  c.hidden_width = get(j, "hidden_width", c.hidden_width);
  c.hidden_layers = get(j, "hidden_layers", c.hidden_layers);
  c.use_injector_bhp = get(j, "use_injector_bhp", c.use_injector_bhp);
  if (j.contains("graph_mode")) c.mode = gnn::graph_mode_from_string(j.at("graph_mode").get<std::string>());
  return c;
}

Json to_json(const gnn::ModelConfig& c) {
  return {{"gcn_width", c.gcn_width}, {"hidden_width", c.hidden_width}, {"hidden_layers", c.hidden_layers},
          {"use_injector_bhp", c.use_injector_bhp}, {"graph_mode", gnn::to_string(c.mode)}};
}

gnn::LossConfig loss_config(const Json& j) {
  allow_keys(j, {"m", "lambda_q", "lambda_p", "lambda_f"}, "loss");
  gnn::LossConfig c;
  c.m = get(j, "m", c.m);
  c.lambda_q = get(j, "lambda_q", c.lambda_q);
  c.lambda_p = get(j, "lambda_p", c.lambda_p);
  c.lambda_f = get(j, "lambda_f", c.lambda_f);
  c.validate();
  return c;
}

Json to_json(const gnn::LossConfig& c) {
  return {{"m", c.m}, {"lambda_q", c.lambda_q}, {"lambda_p", c.lambda_p}, {"lambda_f", c.lambda_f}};
}

train::TrainConfig train_config(const Json& j) {
  allow_keys(j, {"learning_rate", "beta1", "beta2", "epsilon", "clip_norm", "max_epochs", "patience", "min_epochs", "seeds"},
             "train");
  train::TrainConfig c;
  c.learning_rate = get(j, "learning_rate", c.learning_rate);
  c.beta1 = get(j, "beta1", c.beta1);
  c.beta2 = get(j, "beta2", c.beta2);
  c.epsilon = get(j, "epsilon", c.epsilon);
  c.clip_norm = get(j, "clip_norm", c.clip_norm);
  c.max_epochs = get(j, "max_epochs", c.max_epochs);
  c.patience = get(j, "patience", c.patience);
  c.min_epochs = get(j, "min_epochs", c.min_epochs);
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (s.is_number_integer()) {
      const auto n = s.get<long>();
      if (n < 1) throw Error("seed count must be at least 1");
      c.seeds.clear();
      for (long k = 0; k < n; ++k) c.seeds.push_back(1000 + static_cast<std::uint64_t>(k));
    } else {
      c.seeds = s.get<std::vector<std::uint64_t>>();
      if (c.seeds.empty()) throw Error("seed list is empty");
    }
  }
  c.validate();
  return c;
}

Json to_json(const train::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon},
          {"clip_norm", c.clip_norm}, {"max_epochs", c.max_epochs}, {"patience", c.patience}, {"min_epochs", c.min_epochs}, {"seeds", c.seeds}};
}

crm::FitOptions fit_options(const Json& j) {
  allow_keys(j, {"multistarts", "max_iterations", "tolerance", "stall_window", "seed"}, "crm");
  crm::FitOptions o;
  o.multistarts = get(j, "multistarts", o.multistarts);
  o.max_iterations = get(j, "max_iterations", o.max_iterations);
  o.tolerance = get(j, "tolerance", o.tolerance);
  o.stall_window = get(j, "stall_window", o.stall_window);
  o.seed = get(j, "seed", o.seed);
  if (o.multistarts < 1) throw Error("CRM fit needs at least one start");
  return o;
}

bench::BenchConfig bench_config(const Json& j) {
  bench::BenchConfig c;
  c.split = split_fractions(section(j, "split"));
  c.model = model_config(section(j, "model"));
  c.loss = loss_config(section(j, "loss"));
  c.train = train_config(section(j, "train"));
  c.crm = fit_options(section(j, "crm"));
  c.threads = get(j, "threads", c.threads);
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(bench::method_from_id(m.get<std::string>()));
  }
  return c;
}

crm::CrmParams reference_crm_params() {
  crm::CrmParams p;
  p.tau.resize(4);
  p.tau << 30.0, 60.0, 45.0, 80.0;
  p.productivity.resize(4);
  p.productivity << 0.5, 0.8, 0.3, 1.0;
  p.connectivity.resize(2, 4);
  p.connectivity << 0.4, 0.1, 0.3, 0.15,
                    0.05, 0.5, 0.2, 0.2;
  return p;
}

crm::CrmParams crm_params_from_json(const Json& j) {
  crm::CrmParams p = reference_crm_params();
  if (j.contains("tau")) p.tau = vector_from(j.at("tau"));
  if (j.contains("J")) p.productivity = vector_from(j.at("J"));
  if (j.contains("F")) p.connectivity = matrix_from(j.at("F"));
  p.validate();
  return p;
}

Json to_json(const crm::CrmParams& p) {
  return {{"tau", vector_json(p.tau)}, {"J", vector_json(p.productivity)}, {"F", matrix_json(p.connectivity)}};
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error("'" + dir.string() + "' exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw Error("output directory '" + dir.string() + "' is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

void prepare_output_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) throw Error("'" + file.string() + "' exists; pass --force to overwrite");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

bench::CaseInput load_case(const fs::path& dir, const eikonal::GraphBuildConfig& graph) {
  const auto info = read_json(dir / "case.json");
  bench::CaseInput c;
  c.name = info.value("name", dir.filename().string());
  c.total_compressibility = info.at("ct_per_psi").get<double>();
  c.panel = io::read_panel(dir / info.value("panel", "panel.csv"));
  if (info.contains("adjacency")) {
    const auto adj = io::read_connectivity(dir / info.at("adjacency").get<std::string>());
    if (adj.injector_ids != c.panel.injector_ids || adj.producer_ids != c.panel.producer_ids) {
      throw Error("adjacency ids in '" + dir.string() + "' do not match the panel");
    }
    c.prior = adj.values;
  } else {
    const auto grid = eikonal::read_grid(dir / info.value("grid", "grid"));
    const auto wells = io::read_wells(dir / info.value("wells", "wells.csv"));
    const auto g = eikonal::build_graph(grid, wells, graph);
    if (g.adjacency.injector_ids != c.panel.injector_ids || g.adjacency.producer_ids != c.panel.producer_ids) {
      throw Error("well ids in '" + dir.string() + "' do not match the panel");
    }
    c.prior = g.adjacency.values;
  }
  return c;
}

GradcheckSummary run_gradcheck_fixture(const gnn::ModelConfig& model, const gnn::LossConfig& loss,
                                       std::uint64_t seed, double h, double mixed_h, double time_step) {
  const auto params = reference_crm_params();
  const auto schedule = synth::default_schedule(490.0, 10.0);
  const auto world = synth::generate_crm_world(params, schedule, Vector::Constant(4, 300.0), 0.0, 1);
  const IndexRange all{0, world.panel.rows()};
  const Matrix prior = (params.connectivity.array() > 0.0).cast<double>();
  const auto m = gnn::PiGnnModel::create(model, world.panel, all, prior, 1e-5, seed);
  const auto batch = m.make_batch(world.panel, all);
  const auto& shapes = m.shapes();
  const Vector x = m.parameters();

  GradcheckSummary out;
  out.parameters = x.size();
  const auto gc = ad::gradcheck(m.loss_builder(batch, loss), shapes, x, h);
  out.loss_error = gc.max_relative_error;
  out.loss_worst = gc.worst_index;

  // Forward-over-reverse: the gradient of mean(dq/dt) against central
  // differences in each parameter over a fourth-order stencil in time.
  const ad::LossBuilder slope_builder = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
    return ad::mean(*m.forward_on_tape(tape, leaves, batch, true).q.tangent);
  };
  const Vector analytic = ad::grad(slope_builder, shapes, x).gradient;
  auto shifted = [&](double dt) {
    auto b = batch;
    b.t.array() += dt;
    return b;
  };
  auto mean_q = [&](const gnn::Batch& b) -> ad::LossBuilder {
    return [&m, b](ad::Tape& tape, std::span<const ad::Var> leaves) {
      return ad::mean(m.forward_on_tape(tape, leaves, b, false).q.primal);
    };
  };
  const ad::LossBuilder q_at[4] = {mean_q(shifted(2.0 * time_step)), mean_q(shifted(time_step)),
                                   mean_q(shifted(-time_step)), mean_q(shifted(-2.0 * time_step))};
  auto slope = [&](const Vector& w) {
    const double a = ad::evaluate(q_at[0], shapes, w), b = ad::evaluate(q_at[1], shapes, w);
    const double c = ad::evaluate(q_at[2], shapes, w), d = ad::evaluate(q_at[3], shapes, w);
    return (8.0 * (b - c) - (a - d)) / (12.0 * time_step);
  };
  Vector numeric(x.size());
  Vector w = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    w[k] = x[k] + mixed_h;
    const double a = slope(w);
    w[k] = x[k] - mixed_h;
    const double b = slope(w);
    w[k] = x[k];
    numeric[k] = (a - b) / (2.0 * mixed_h);
  }
  const double floor = 1e-6 * numeric.cwiseAbs().maxCoeff();
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor, 1e-300});
    const double e = std::abs(analytic[k] - numeric[k]) / denom;
    if (e > out.mixed_error || out.mixed_worst < 0) {
      out.mixed_error = e;
      out.mixed_worst = k;
    }
  }
  return out;
}

int run_synth(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"out", "force", "kind", "name", "cases", "seed", "injectors", "producers", "grid", "schedule",
                   "simulator", "crm"},
             "synth");
  const fs::path out = required_path(cfg, "out", "synth");
  const bool force = get(cfg, "force", false);
  const auto kind = get<std::string>(cfg, "kind", "channel");
  prepare_output_dir(out, force);

  if (kind == "crm-world") {
    const auto& c = section(cfg, "crm");
    allow_keys(c, {"tau", "J", "F", "q0", "noise", "noise_seed", "injector_bhp", "ct_per_psi"}, "crm");
    const auto params = crm_params_from_json(c);
    const auto np = params.tau.size();
    const auto ni = params.connectivity.rows();
    auto base = synth::default_schedule();
    base.injection.resize(static_cast<std::size_t>(ni), base.injection.back());
    base.producer_bhp = Vector::Constant(np, 1000.0);
    const auto schedule = schedule_from_json(section(cfg, "schedule"), base);
    Vector q0 = Vector::Constant(np, 300.0);
    if (c.contains("q0")) q0 = c.at("q0").is_number() ? Vector::Constant(np, c.at("q0").get<double>()) : vector_from(c.at("q0"));
    if (q0.size() != np) throw Error("q0 length does not match the producer count");
    const double noise = get(c, "noise", 0.0);
    const double ct = get(c, "ct_per_psi", 1e-5);
    const auto world = synth::generate_crm_world(params, schedule, q0, noise, get<std::uint64_t>(c, "noise_seed", 1),
                                                 get(c, "injector_bhp", 4000.0));
    io::write_panel(out / "panel.csv", world.panel);
    const Matrix structure = (params.connectivity.array() > 0.0).cast<double>();
    io::write_connectivity(out / "adj.csv", {structure, world.panel.injector_ids, world.panel.producer_ids});
    Json truth = to_json(params);
    truth["q0"] = vector_json(q0);
    truth["noise"] = noise;
    truth["ct_per_psi"] = ct;
    truth["pore_volume"] = vector_json(params.pore_volume(ct));
    write_json(out / "truth.json", truth);
    write_json(out / "case.json", {{"name", get<std::string>(cfg, "name", "crm_world")},
                                   {"kind", kind},
                                   {"ct_per_psi", ct},
                                   {"panel", "panel.csv"},
                                   {"adjacency", "adj.csv"},
                                   {"truth", "truth.json"},
                                   {"schedule", to_json(schedule)}});
    log << "wrote CRM world with " << world.panel.rows() << " rows to " << out.string() << '\n';
    return 0;
  }
  if (kind != "channel") throw Error("unknown synth kind '" + kind + "'");

  const auto grid_cfg = channel_config(section(cfg, "grid"));
  const auto sim = simulator_options(section(cfg, "simulator"));
  auto cases = synth::make_cases(grid_cfg, get(cfg, "cases", 4), get<std::uint64_t>(cfg, "seed", 42),
                                 get(cfg, "injectors", 2), get(cfg, "producers", 4));
  std::vector<std::string> names;
  for (auto& k : cases) {
    k.schedule = schedule_from_json(section(cfg, "schedule"), k.schedule);
    const auto r = synth::simulate_diffusivity(k.grid, k.wells, k.schedule, sim);
    double worst = 0.0;
    for (double e : r.mass_balance_error) worst = std::max(worst, e);
    const auto dir = out / k.name;
    fs::create_directories(dir);
    eikonal::write_grid(dir / "grid", k.grid);
    io::write_wells(dir / "wells.csv", k.wells);
    io::write_panel(dir / "panel.csv", r.panel);
    write_json(dir / "case.json", {{"name", k.name},
                                   {"kind", kind},
                                   {"ct_per_psi", k.grid.fluid.total_compressibility},
                                   {"panel", "panel.csv"},
                                   {"wells", "wells.csv"},
                                   {"grid", "grid"},
                                   {"field", to_json(grid_cfg)},
                                   {"schedule", to_json(k.schedule)},
                                   {"simulator", to_json(sim)},
                                   {"max_mass_balance_error", worst}});
    log << k.name << ": " << r.panel.rows() << " rows, max mass-balance error " << worst << '\n';
    names.push_back(k.name);
  }
  write_json(out / "index.json", {{"cases", names}});
  return 0;
}

int run_graph(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"grid", "wells", "k", "sectors", "seed_radius", "out", "force"}, "graph");
  const auto gc = graph_config({{"k", get(cfg, "k", 1)},
                                {"sectors", get(cfg, "sectors", 4)},
                                {"seed_radius", get(cfg, "seed_radius", 8.0)}});
  const fs::path out = required_path(cfg, "out", "graph");
  prepare_output_file(out, get(cfg, "force", false));
  const auto grid = eikonal::read_grid(required_path(cfg, "grid", "graph"));
  const auto wells = io::read_wells(required_path(cfg, "wells", "graph"));
  const auto g = eikonal::build_graph(grid, wells, gc);
  for (const auto& w : g.warnings) log << "warning: " << w << '\n';
  io::write_connectivity(out, g.adjacency.as_connectivity());
  log << "wrote " << g.adjacency.values.sum() << " edges to " << out.string() << '\n';
  return 0;
}

int run_crm_fit(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"panel", "ct", "out", "force", "split", "structure", "multistarts", "max_iterations",
                   "tolerance", "stall_window", "seed"},
             "crm-fit");
  const fs::path out = required_path(cfg, "out", "crm-fit");
  prepare_output_file(out, get(cfg, "force", false));
  const auto panel = io::read_panel(required_path(cfg, "panel", "crm-fit"));
  const double ct = get(cfg, "ct", 1e-5);
  const auto split = split_panel(panel, split_fractions(section(cfg, "split")));
  Json fo = Json::object();
  for (const char* key : {"multistarts", "max_iterations", "tolerance", "stall_window", "seed"}) {
    if (cfg.contains(key)) fo[key] = cfg.at(key);
  }
  auto opts = fit_options(fo);
  if (cfg.contains("structure")) opts.structure = io::read_connectivity(cfg.at("structure").get<std::string>()).values;
  const auto fit = crm::crm_fit(panel, split, ct, opts);
  const auto pred = bench::crm_prediction(fit.params, panel, split);
  const Vector train = window_rmse(panel.production, pred, split.train);
  const Vector test = window_rmse(panel.production, pred, split.test);
  Json j = to_json(fit.params);
  j["injector_ids"] = panel.injector_ids;
  j["producer_ids"] = panel.producer_ids;
  j["ct_per_psi"] = ct;
  j["pore_volume"] = vector_json(fit.params.pore_volume(ct));
  j["diagnostics"] = {{"objective", fit.objective},
                      {"successful_restarts", fit.successful_restarts},
                      {"restarts", fit.restarts.size()},
                      {"train_rows", split.train.size()},
                      {"train_rmse", per_producer(panel.producer_ids, train)},
                      {"test_rmse", per_producer(panel.producer_ids, test)},
                      {"test_total", vector_total(test)}};
  write_json(out, j);
  log << "objective " << fit.objective << " from " << fit.successful_restarts << "/" << fit.restarts.size()
      << " starts\n";
  write_table(log, panel.producer_ids, "test rmse", test);
  return 0;
}

int run_train(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"panel", "adj", "self_learned", "physics", "seeds", "ct", "out", "force", "split", "model",
                   "loss", "train", "threads"},
             "train");
  const fs::path out = required_path(cfg, "out", "train");
  prepare_output_dir(out, get(cfg, "force", false));
  const fs::path panel_path = fs::absolute(required_path(cfg, "panel", "train"));
  const auto panel = io::read_panel(panel_path);
  const double ct = get(cfg, "ct", 1e-5);
  const auto fractions = split_fractions(section(cfg, "split"));
  const auto split = split_panel(panel, fractions);
  auto model = model_config(section(cfg, "model"));
  const bool self_learned = get(cfg, "self_learned", !cfg.contains("adj"));
  model.mode = self_learned ? gnn::GraphMode::SelfLearned : gnn::GraphMode::Expert;
  std::optional<Matrix> prior;
  if (!self_learned) {
    const auto adj = io::read_connectivity(required_path(cfg, "adj", "train with an expert graph"));
    if (adj.injector_ids != panel.injector_ids || adj.producer_ids != panel.producer_ids) {
      throw Error("adjacency ids do not match the panel");
    }
    prior = adj.values;
  }
  auto loss = loss_config(section(cfg, "loss"));
  const bool physics = physics_flag(cfg, true);
  if (!physics) loss.lambda_f = 0.0;
  Json tj = section(cfg, "train");
  if (cfg.contains("seeds")) tj["seeds"] = cfg.at("seeds");
  const auto tc = train_config(tj);

  const auto ens = train::train_ensemble(model, panel, split, prior, ct, tc, loss, get(cfg, "threads", 1));
  Json members = Json::array();
  for (const auto& m : ens.members) {
    const auto seed = std::to_string(m.model.seed());
    svg::write_text(out / ("model_" + seed + ".json"), m.model.to_json());
    std::ostringstream hist;
    hist << "epoch,train_loss,validation_loss\n";
    for (std::size_t e = 0; e < m.history.train_loss.size(); ++e) {
      hist << e << ',' << io::format_double(m.history.train_loss[e]) << ','
           << io::format_double(m.history.validation_loss[e]) << '\n';
    }
    svg::write_text(out / ("history_" + seed + ".csv"), hist.str());
    members.push_back({{"seed", m.model.seed()},
                       {"model", "model_" + seed + ".json"},
                       {"best_epoch", m.history.best_epoch},
                       {"best_validation", m.history.best_validation},
                       {"epochs", m.history.train_loss.size()},
                       {"stopped_early", m.history.stopped_early}});
    log << "seed " << seed << ": best epoch " << m.history.best_epoch << ", validation "
        << m.history.best_validation << '\n';
  }
  io::write_connectivity(out / "connectivity.csv", {ens.mean_connectivity, panel.injector_ids, panel.producer_ids});
  io::write_panel(out / "prediction.csv", clipped(panel, ens.mean_q));
  const Vector test = window_rmse(panel.production, ens.mean_q, split.test);
  write_json(out / "run.json", {{"panel", panel_path.string()},
                                {"ct_per_psi", ct},
                                {"graph_mode", gnn::to_string(model.mode)},
                                {"physics", physics},
                                {"split", to_json(fractions)},
                                {"model", to_json(model)},
                                {"loss", to_json(loss)},
                                {"train", to_json(tc)},
                                {"members", members},
                                {"injector_ids", panel.injector_ids},
                                {"producer_ids", panel.producer_ids}});
  write_table(log, panel.producer_ids, "test rmse", test);
  return 0;
}

int run_evaluate(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"run", "panel", "out", "force"}, "evaluate");
  const fs::path run = required_path(cfg, "run", "evaluate");
  const auto info = read_json(run / "run.json");
  const fs::path out = cfg.contains("out") ? fs::path(cfg.at("out").get<std::string>()) : run / "metrics.json";
  prepare_output_file(out, get(cfg, "force", false));
  const auto panel = io::read_panel(cfg.contains("panel") ? cfg.at("panel").get<std::string>()
                                                          : info.at("panel").get<std::string>());
  std::vector<gnn::PiGnnModel> members;
  for (const auto& m : info.at("members")) {
    std::ifstream in(run / m.at("model").get<std::string>());
    if (!in) throw Error("missing model file " + m.at("model").get<std::string>());
    std::stringstream text;
    text << in.rdbuf();
    members.push_back(gnn::PiGnnModel::from_json(text.str()));
  }
  if (members.empty()) throw Error("run has no trained members");
  if (members.front().num_producers() != panel.num_producers() ||
      members.front().num_injectors() != panel.num_injectors()) {
    throw Error("panel well counts do not match the trained models");
  }
  const auto split = split_panel(panel, split_fractions(info.at("split")));
  const auto warnings = members.front().predict(panel).warnings;
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  const Matrix q = gnn::ensemble_predict(members, panel);
  Matrix f = Matrix::Zero(panel.num_injectors(), panel.num_producers());
  for (const auto& m : members) f += m.connectivity();
  f /= static_cast<double>(members.size());
  const Vector train = window_rmse(panel.production, q, split.train);
  const Vector val = window_rmse(panel.production, q, split.validation);
  const Vector test = window_rmse(panel.production, q, split.test);
  const auto& ids = panel.producer_ids;
  write_json(out, {{"members", members.size()},
                   {"train_rmse", per_producer(ids, train)},
                   {"validation_rmse", per_producer(ids, val)},
                   {"test_rmse", per_producer(ids, test)},
                   {"test_total", vector_total(test)},
                   {"connectivity", matrix_json(f)},
                   {"warnings", warnings}});
  log << std::left << std::setw(12) << "window";
  for (const auto& id : ids) log << std::right << std::setw(12) << id;
  log << std::right << std::setw(14) << "Total" << '\n';
  write_table(log, ids, "train", train);
  write_table(log, ids, "validation", val);
  write_table(log, ids, "test", test);
  return 0;
}

int run_bench(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"out", "force", "cases", "synth", "graph", "split", "model", "loss", "train", "crm", "methods",
                   "threads"},
             "bench");
  const fs::path out = required_path(cfg, "out", "bench");
  const bool force = get(cfg, "force", false);
  prepare_output_dir(out, force);
  const auto config = bench_config(cfg);
  const auto graph = graph_config(section(cfg, "graph"));
  std::vector<fs::path> dirs;
  if (cfg.contains("cases")) {
    for (const auto& c : cfg.at("cases")) dirs.emplace_back(c.get<std::string>());
  } else {
    Json s = section(cfg, "synth");
    s["out"] = (out / "cases").string();
    s["force"] = force;
    if (run_synth(s, log) != 0) return 1;
    for (const auto& name : read_json(out / "cases" / "index.json").at("cases")) {
      dirs.push_back(out / "cases" / name.get<std::string>());
    }
  }
  std::vector<bench::CaseInput> inputs;
  for (const auto& d : dirs) inputs.push_back(load_case(d, graph));
  const auto report = bench::run_benchmark(inputs, config);
  bench::write_report(out, report);
  log << bench::export_table_text(report);
  int status = 0;
  for (const auto& c : report.cases) {
    for (const auto& m : c.methods) {
      if (!m.ok) {
        log << c.name << ' ' << bench::method_id(m.method) << " failed: " << m.error << '\n';
        status = 1;
      }
    }
  }
  log << "benchmark finished in " << report.seconds << " s\n";
  return status;
}

int run_gradcheck(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"mode", "physics", "seed", "h", "mixed_h", "time_step", "tolerance", "mixed_tolerance", "model", "loss"},
             "gradcheck");
  auto model = model_config(section(cfg, "model"));
  model.mode = gnn::graph_mode_from_string(get<std::string>(cfg, "mode", "self-learned"));
  auto loss = loss_config(section(cfg, "loss"));
  if (!physics_flag(cfg, true)) loss.lambda_f = 0.0;
  const double tol = get(cfg, "tolerance", 1e-4);
  const double mixed_tol = get(cfg, "mixed_tolerance", 1e-3);
  const auto r = run_gradcheck_fixture(model, loss, get<std::uint64_t>(cfg, "seed", 1000), get(cfg, "h", 1e-5),
                                       get(cfg, "mixed_h", 1e-3), get(cfg, "time_step", 1e-3));
  log << "configuration: " << gnn::to_string(model.mode) << ", lambda_f " << loss.lambda_f << ", "
      << r.parameters << " parameters\n";
  log << "loss gradient max relative error " << r.loss_error << " (parameter " << r.loss_worst << ")\n";
  log << "mixed derivative max relative error " << r.mixed_error << " (parameter " << r.mixed_worst << ")\n";
  return r.loss_error < tol && r.mixed_error < mixed_tol ? 0 : 1;
}

int run_plots(const Json& cfg, std::ostream& log) {
  allow_keys(cfg, {"report", "out"}, "plots");
  const fs::path report = required_path(cfg, "report", "plots");
  const fs::path out = cfg.contains("out") ? fs::path(cfg.at("out").get<std::string>()) : report;
  for (const auto& name : bench::report_case_names(report)) {
    const auto c = bench::read_case_result(report / name);
    fs::create_directories(out / name);
    bench::write_case_plots(out / name, c);
    log << "plotted " << name << '\n';
  }
  return 0;
}

int run_stage(const std::string& name, const Json& cfg, std::ostream& log) {
  if (name == "synth") return run_synth(cfg, log);
  if (name == "graph") return run_graph(cfg, log);
  if (name == "crm-fit") return run_crm_fit(cfg, log);
  if (name == "train") return run_train(cfg, log);
  if (name == "evaluate") return run_evaluate(cfg, log);
  if (name == "bench") return run_bench(cfg, log);
  if (name == "gradcheck") return run_gradcheck(cfg, log);
  if (name == "plots") return run_plots(cfg, log);
  throw Error("unknown stage '" + name + "'");
}

}  // namespace pignn::pipeline
