#include "pignn/synth.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>

namespace pignn::synth {

namespace {

constexpr double kDarcy = 0.001127;     // bbl/day/psi per mD*ft
constexpr double kFt3PerBbl = 5.614583;

double step_value(const std::vector<RateStep>& steps, double t) {
  double v = 0.0;
  for (const auto& s : steps) {
    if (s.start <= t + 1e-9) v = s.rate;
  }
  return v;
}

}  // namespace

void ChannelFieldConfig::validate() const {
  if (nx < 2 || ny < 2) throw Error("channel field needs at least 2x2 cells");
  if (!(dx > 0.0 && dy > 0.0 && thickness > 0.0)) throw Error("cell sizes must be positive");
  if (!(k_net > k_bank && k_bank > 0.0)) throw Error("channel permeability must exceed a positive bank permeability");
  if (!(phi > 0.0 && phi < 1.0)) throw Error("porosity must lie in (0, 1)");
  if (channel_count < 0) throw Error("channel count must be nonnegative");
  if (!(channel_width > 0.0) || channel_width >= ny) throw Error("channel width must be positive and smaller than the domain");
  if (!(wavelength > 0.0) || amplitude < 0.0) throw Error("channel wavelength must be positive");
  fluid.validate();
}

eikonal::ReservoirGrid gen_channel_field(const ChannelFieldConfig& c) {
  c.validate();
  eikonal::ReservoirGrid g;
  g.nx = c.nx;
  g.ny = c.ny;
  g.dx = c.dx;
  g.dy = c.dy;
  g.thickness = c.thickness;
  g.fluid = c.fluid;
  g.perm = Matrix::Constant(c.ny, c.nx, c.k_bank);
  g.phi = Matrix::Constant(c.ny, c.nx, c.phi);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double spacing = static_cast<double>(c.ny) / std::max(1, c.channel_count);
  for (int ch = 0; ch < c.channel_count; ++ch) {
    const double jitter = (unit(rng) - 0.5) * 0.5 * std::max(0.0, spacing - c.channel_width);
    const double centre = (ch + 0.5) * spacing + jitter;
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    for (int ix = 0; ix < c.nx; ++ix) {
      const double yc = centre + c.amplitude * std::sin(2.0 * std::numbers::pi * (ix + 0.5) / c.wavelength + phase);
      for (int iy = 0; iy < c.ny; ++iy) {
        if (std::abs(iy + 0.5 - yc) < 0.5 * c.channel_width) g.perm(iy, ix) = c.k_net;
      }
    }
  }
  return g;
}

void Schedule::validate(std::size_t ni, std::size_t np) const {
  if (!(step > 0.0) || !(horizon > 0.0)) throw Error("schedule horizon and step must be positive");
  const double n = horizon / step;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) throw Error("schedule horizon must be a whole number of steps");
  if (injection.size() != ni) throw Error("schedule injector count does not match the wells");
  if (static_cast<std::size_t>(producer_bhp.size()) != np) throw Error("schedule producer count does not match the wells");
  if (bhp_drift.size() != 0 && static_cast<std::size_t>(bhp_drift.size()) != np) throw Error("BHP drift length mismatch");
  for (const auto& steps : injection) {
    for (std::size_t k = 0; k < steps.size(); ++k) {
      if (steps[k].rate < 0.0) throw Error("injection rates must be nonnegative");
      if (k && steps[k].start <= steps[k - 1].start) throw Error("schedule steps must be sorted by start time");
    }
  }
}

Eigen::Index Schedule::num_steps() const {
  return static_cast<Eigen::Index>(std::llround(horizon / step));
}

Vector Schedule::times() const {
  const auto n = num_steps();
  Vector t(n + 1);
  for (Eigen::Index k = 0; k <= n; ++k) t[k] = static_cast<double>(k) * step;
  return t;
}

Matrix Schedule::injection_rows() const {
  const auto n = num_steps();
  Matrix I(n + 1, static_cast<Eigen::Index>(injection.size()));
  for (std::size_t i = 0; i < injection.size(); ++i) {
    for (Eigen::Index k = 1; k <= n; ++k) {
      I(k, static_cast<Eigen::Index>(i)) = step_value(injection[i], static_cast<double>(k - 1) * step);
    }
    I(0, static_cast<Eigen::Index>(i)) = n > 0 ? I(1, static_cast<Eigen::Index>(i)) : step_value(injection[i], 0.0);
  }
  return I;
}

Matrix Schedule::producer_bhp_rows() const {
  const auto t = times();
  Matrix p(t.size(), producer_bhp.size());
  for (Eigen::Index j = 0; j < producer_bhp.size(); ++j) {
    const double drift = bhp_drift.size() ? bhp_drift[j] : 0.0;
    p.col(j) = (producer_bhp[j] + drift * t.array()).matrix();
  }
  return p;
}

double peaceman_index(double perm, double dx, double thickness, double viscosity, double rw) {
  const double re = 0.2 * dx;
  if (!(re > rw)) throw Error("well radius must be smaller than the Peaceman equivalent radius");
  return 2.0 * std::numbers::pi * kDarcy * perm * thickness / (viscosity * std::log(re / rw));
}

SimulationResult simulate_diffusivity(const eikonal::ReservoirGrid& grid, const WellNetwork& wells,
                                      const Schedule& schedule, const SimulatorOptions& options) {
  grid.validate();
  if (!wells.injectors.empty() || !wells.producers.empty()) wells.validate();
  const auto ni = wells.injectors.size();
  const auto np = wells.producers.size();
  schedule.validate(ni, np);
  if (options.warmup < 0.0) throw Error("warmup must be nonnegative");

  const int nx = grid.nx;
  const int ny = grid.ny;
  const int n = nx * ny;
  const double mu = grid.fluid.viscosity;
  const double ct = grid.fluid.total_compressibility;
  const double dt = schedule.step;

  Vector pv(n);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) pv[iy * nx + ix] = grid.phi(iy, ix) * grid.dx * grid.dy * grid.thickness / kFt3PerBbl;
  }
  const Vector acc = pv * ct / dt;
  // Stored volume of a 1e-6 psi uniform change.
  const double storage_floor = 1e-6 * ct * pv.sum();

  std::vector<Eigen::Triplet<double>> trans;
  auto connect = [&](int a, int b, double ka, double kb, double area, double length) {
    const double t = kDarcy * area * 2.0 * ka * kb / ((ka + kb) * mu * length);
    trans.emplace_back(a, a, t);
    trans.emplace_back(b, b, t);
    trans.emplace_back(a, b, -t);
    trans.emplace_back(b, a, -t);
  };
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const int c = iy * nx + ix;
      if (ix + 1 < nx) connect(c, c + 1, grid.perm(iy, ix), grid.perm(iy, ix + 1), grid.dy * grid.thickness, grid.dx);
      if (iy + 1 < ny) connect(c, c + nx, grid.perm(iy, ix), grid.perm(iy + 1, ix), grid.dx * grid.thickness, grid.dy);
    }
  }

  std::vector<int> inj_cell(ni);
  std::vector<int> prd_cell(np);
  SimulatorState state;
  state.fluid = grid.fluid;
  state.injector_wi.resize(static_cast<Eigen::Index>(ni));
  state.producer_wi.resize(static_cast<Eigen::Index>(np));
  auto well_cell = [&](const Well& w) {
    const auto cell = grid.cell_of(w.x, w.y);
    return std::pair{grid.index(cell), grid.perm(cell.iy, cell.ix)};
  };
  for (std::size_t i = 0; i < ni; ++i) {
    const auto [c, k] = well_cell(wells.injectors[i]);
    inj_cell[i] = c;
    state.injector_wi[static_cast<Eigen::Index>(i)] = peaceman_index(k, grid.dx, grid.thickness, mu, options.well_radius);
  }
  for (std::size_t j = 0; j < np; ++j) {
    const auto [c, k] = well_cell(wells.producers[j]);
    prd_cell[j] = c;
    state.producer_wi[static_cast<Eigen::Index>(j)] = peaceman_index(k, grid.dx, grid.thickness, mu, options.well_radius);
  }

  using Sparse = Eigen::SparseMatrix<double>;
  using Solver = Eigen::SimplicialLDLT<Sparse>;
  std::map<std::vector<bool>, std::unique_ptr<Solver>> factors;
  auto solver_for = [&](const std::vector<bool>& active) -> Solver& {
    auto it = factors.find(active);
    if (it != factors.end()) return *it->second;
    auto triplets = trans;
    for (int c = 0; c < n; ++c) triplets.emplace_back(c, c, acc[c]);
    for (std::size_t j = 0; j < np; ++j) {
      if (active[j]) triplets.emplace_back(prd_cell[j], prd_cell[j], state.producer_wi[static_cast<Eigen::Index>(j)]);
    }
    Sparse A(n, n);
    A.setFromTriplets(triplets.begin(), triplets.end());
    auto solver = std::make_unique<Solver>();
    solver->compute(A);
    if (solver->info() != Eigen::Success) throw Error("simulator matrix factorization failed");
    return *factors.emplace(active, std::move(solver)).first->second;
  };

  Vector p = Vector::Constant(n, options.initial_pressure);
  std::vector<bool> active(np, true);
  SimulationResult result;
  result.pore_volume = pv;

  // One implicit step; returns the producer rates at the new time.
  auto advance = [&](const Vector& rates, const Vector& pwf, long index) {
    Vector rhs = acc.cwiseProduct(p);
    for (std::size_t i = 0; i < ni; ++i) rhs[inj_cell[i]] += rates[static_cast<Eigen::Index>(i)];
    Vector next;
    for (int iter = 0;; ++iter) {
      if (iter > 50) throw Error("producer shut-in iteration did not settle at step " + std::to_string(index));
      Vector b = rhs;
      for (std::size_t j = 0; j < np; ++j) {
        if (active[j]) b[prd_cell[j]] += state.producer_wi[static_cast<Eigen::Index>(j)] * pwf[static_cast<Eigen::Index>(j)];
      }
      auto& solver = solver_for(active);
      next = solver.solve(b);
      if (solver.info() != Eigen::Success || !next.allFinite()) {
        throw Error("linear solve failed at step " + std::to_string(index));
      }
      bool changed = false;
      for (std::size_t j = 0; j < np; ++j) {
        // Hysteresis of 1e-9 psi keeps a well at its BHP from toggling on rounding.
        const double pj = pwf[static_cast<Eigen::Index>(j)];
        const double band = 1e-9 * std::max(1.0, std::abs(pj));
        const bool flowing = active[j] ? next[prd_cell[j]] > pj - band : next[prd_cell[j]] > pj + band;
        if (flowing != active[j]) {
          active[j] = flowing;
          changed = true;
        }
      }
      if (!changed) break;
    }
    Vector q(static_cast<Eigen::Index>(np));
    for (std::size_t j = 0; j < np; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      q[jj] = active[j] ? state.producer_wi[jj] * (next[prd_cell[j]] - pwf[jj]) : 0.0;
    }
    const double expected = dt * (rates.sum() - q.sum());
    const double stored = pv.dot(next - p) * ct;
    const double denom = std::max({std::abs(expected), std::abs(stored), dt * rates.sum(), dt * q.sum(), storage_floor});
    result.mass_balance_error.push_back(std::abs(expected - stored) / denom);
    p = std::move(next);
    return q;
  };

  const Matrix I = schedule.injection_rows();
  const Matrix pwf = schedule.producer_bhp_rows();
  const auto warm_steps = static_cast<long>(std::llround(options.warmup / dt));
  for (long s = 0; s < warm_steps; ++s) advance(I.row(0).transpose(), pwf.row(0).transpose(), -warm_steps + s);

  const Vector times = schedule.times();
  const auto rows = times.size();
  TimeSeriesPanel& panel = result.panel;
  panel.times = times;
  panel.injection = I;
  panel.injector_bhp.resize(rows, static_cast<Eigen::Index>(ni));
  panel.production.resize(rows, static_cast<Eigen::Index>(np));
  panel.producer_bhp = pwf;
  panel.injector_ids = wells.injector_ids();
  panel.producer_ids = wells.producer_ids();
  auto record = [&](Eigen::Index k, const Vector& q) {
    for (std::size_t i = 0; i < ni; ++i) panel.injector_bhp(k, static_cast<Eigen::Index>(i)) = p[inj_cell[i]];
    panel.production.row(k) = q.cwiseMax(0.0).transpose();
  };
  Vector q0(static_cast<Eigen::Index>(np));
  for (std::size_t j = 0; j < np; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    q0[jj] = std::max(0.0, state.producer_wi[jj] * (p[prd_cell[j]] - pwf(0, jj)));
  }
  result.initial_mean_pressure = p.dot(pv) / pv.sum();
  result.mass_balance_error.clear();
  record(0, q0);
  for (Eigen::Index k = 1; k < rows; ++k) {
    const Vector q = advance(I.row(k).transpose(), pwf.row(k).transpose(), static_cast<long>(k));
    record(k, q);
  }
  result.final_mean_pressure = p.dot(pv) / pv.sum();
  state.pressure.resize(ny, nx);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) state.pressure(iy, ix) = p[iy * nx + ix];
  }
  result.final_state = std::move(state);
  panel.validate();
  return result;
}

CrmWorld generate_crm_world(const crm::CrmParams& params, const Schedule& schedule, const Vector& q0,
                            double noise, std::uint64_t seed, double injector_bhp, double substep) {
  params.validate();
  const auto ni = static_cast<std::size_t>(params.connectivity.rows());
  const auto np = static_cast<std::size_t>(params.tau.size());
  schedule.validate(ni, np);
  if (noise < 0.0) throw Error("noise fraction must be nonnegative");
  crm::CrmInputs in{schedule.times(), schedule.injection_rows(), schedule.producer_bhp_rows()};
  CrmWorld w;
  w.clean_q = crm::integrate_crm_ode(params, in, q0, substep);
  const auto rows = in.times.size();
  w.dq_dt.resize(rows, static_cast<Eigen::Index>(np));
  w.dp_dt.resize(rows, static_cast<Eigen::Index>(np));
  const Matrix allocated = in.injection * params.connectivity;
  for (Eigen::Index k = 0; k < rows; ++k) {
    const auto seg = std::max<Eigen::Index>(k, 1);
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(np); ++j) {
      const double slope = rows > 1 ? (in.producer_bhp(seg, j) - in.producer_bhp(seg - 1, j)) /
                                          (in.times[seg] - in.times[seg - 1])
                                    : 0.0;
      const double tau = params.tau[j];
      w.dp_dt(k, j) = slope;
      w.dq_dt(k, j) = (allocated(k, j) - w.clean_q(k, j) - tau * params.productivity[j] * slope) / tau;
    }
  }
  TimeSeriesPanel& p = w.panel;
  p.times = in.times;
  p.injection = in.injection;
  p.injector_bhp = Matrix::Constant(rows, static_cast<Eigen::Index>(ni), injector_bhp);
  p.producer_bhp = in.producer_bhp;
  p.production = w.clean_q.cwiseMax(0.0);
  if (noise > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, noise * w.clean_q.mean());
    for (Eigen::Index c = 0; c < p.production.cols(); ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) p.production(r, c) = std::max(0.0, w.clean_q(r, c) + gauss(rng));
    }
  }
  for (std::size_t i = 0; i < ni; ++i) p.injector_ids.push_back("I" + std::to_string(i + 1));
  for (std::size_t j = 0; j < np; ++j) p.producer_ids.push_back("P" + std::to_string(j + 1));
  p.validate();
  return w;
}

Schedule default_schedule(double horizon, double step) {
  Schedule s;
  s.horizon = horizon;
  s.step = step;
  const double f = horizon / 2000.0;
  s.injection = {
      {{0.0, 1000.0}, {300 * f, 500.0}, {700 * f, 1500.0}, {1100 * f, 800.0}, {1500 * f, 1200.0}, {1800 * f, 600.0}},
      {{0.0, 800.0}, {200 * f, 1400.0}, {600 * f, 600.0}, {1000 * f, 1200.0}, {1400 * f, 900.0}, {1700 * f, 1000.0}},
  };
  s.producer_bhp = Vector::Constant(4, 1000.0);
  return s;
}

std::vector<Case> make_cases(const ChannelFieldConfig& grid_config, int count, std::uint64_t seed,
                             int num_injectors, int num_producers) {
  if (count < 1) throw Error("case count must be at least 1");
  const auto grid = gen_channel_field(grid_config);
  const auto base = default_schedule();
  const int margin = std::min(5, std::min(grid.nx, grid.ny) / 4);
  const int spacing = std::max(1, std::min(grid.nx, grid.ny) / 10);
  std::vector<Case> cases;
  for (int c = 0; c < count; ++c) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(c) * 7919);
    std::uniform_int_distribution<int> px(margin, grid.nx - 1 - margin);
    std::uniform_int_distribution<int> py(margin, grid.ny - 1 - margin);
    std::vector<eikonal::Cell> cells;
    int tries = 0;
    while (static_cast<int>(cells.size()) < num_injectors + num_producers) {
      if (++tries > 100000) throw Error("could not place wells without collision");
      const eikonal::Cell cand{px(rng), py(rng)};
      const bool clear = std::none_of(cells.begin(), cells.end(), [&](const eikonal::Cell& o) {
        return std::max(std::abs(o.ix - cand.ix), std::abs(o.iy - cand.iy)) < spacing;
      });
      if (clear) cells.push_back(cand);
    }
    Case k;
    k.name = "case" + std::to_string(c + 1);
    k.grid = grid;
    for (int w = 0; w < num_injectors + num_producers; ++w) {
      const auto& cell = cells[static_cast<std::size_t>(w)];
      Well well{"", (cell.ix + 0.5) * grid.dx, (cell.iy + 0.5) * grid.dy};
      if (w < num_injectors) {
        well.id = "I" + std::to_string(w + 1);
        k.wells.injectors.push_back(well);
      } else {
        well.id = "P" + std::to_string(w - num_injectors + 1);
        k.wells.producers.push_back(well);
      }
    }
    k.schedule = base;
    k.schedule.injection.resize(static_cast<std::size_t>(num_injectors), base.injection.back());
    k.schedule.producer_bhp = Vector::Constant(num_producers, 1000.0);
    cases.push_back(std::move(k));
  }
  return cases;
}

}  // namespace pignn::synth
