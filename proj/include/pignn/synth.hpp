#pragma once

// Synthetic truth: channelized permeability rasters, a fully implicit
// single-phase simulator with wells, CRM-world panels and case layouts.

#include "pignn/core.hpp"
#include "pignn/crm.hpp"
#include "pignn/eikonal.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pignn::synth {

struct ChannelFieldConfig {
  int nx = 100;
  int ny = 100;
  double dx = 50.0;  // ft
  double dy = 50.0;
  double thickness = 20.0;
  double k_net = 100.0;  // mD
  double k_bank = 10.0;
  double phi = 0.15;
  int channel_count = 5;
  double channel_width = 10.0;  // cells
  double amplitude = 8.0;       // cells
  double wavelength = 70.0;     // cells
  std::uint64_t seed = 7;
  FluidProps fluid{5e-6, 1.0};

  void validate() const;
};

/// Sinusoidal bands running along x; band c has centre
/// y_c + amplitude * sin(2 pi x / wavelength + phase_c).
eikonal::ReservoirGrid gen_channel_field(const ChannelFieldConfig& config);

struct RateStep {
  double start = 0.0;  // days
  double rate = 0.0;   // bbl/day
};

struct Schedule {
  double horizon = 2000.0;  // days
  double step = 10.0;
  /// Piecewise-constant injection per injector, steps sorted by start.
  std::vector<std::vector<RateStep>> injection;
  /// Producer BHP p_wf(t) = producer_bhp + bhp_drift * t.
  Vector producer_bhp;
  Vector bhp_drift;

  void validate(std::size_t num_injectors, std::size_t num_producers) const;
  Eigen::Index num_steps() const;
  /// Row k holds t_k = k * step for k = 0..num_steps().
  Vector times() const;
  /// Rate applied over (t_{k-1}, t_k]; row 0 repeats the first interval.
  Matrix injection_rows() const;
  Matrix producer_bhp_rows() const;
};

struct SimulatorOptions {
  double initial_pressure = 3000.0;  // psi
  double well_radius = 0.3;          // ft
  /// Days simulated under the first schedule interval before row 0.
  double warmup = 1000.0;
};

struct SimulatorState {
  Matrix pressure;  // [ny x nx] psi
  Vector injector_wi;
  Vector producer_wi;
  FluidProps fluid;
};

struct SimulationResult {
  TimeSeriesPanel panel;
  SimulatorState final_state;
  /// Per step: |(I - q) dt - sum PV c_t dp| / max(|(I - q) dt|, tiny).
  std::vector<double> mass_balance_error;
  Vector pore_volume;  // per cell, bbl, row-major
  double initial_mean_pressure = 0.0;
  double final_mean_pressure = 0.0;
};

/// Peaceman well index in bbl/day/psi with r_e = 0.2 dx.
double peaceman_index(double perm, double dx, double thickness, double viscosity, double rw);

SimulationResult simulate_diffusivity(const eikonal::ReservoirGrid& grid, const WellNetwork& wells,
                                      const Schedule& schedule, const SimulatorOptions& options = {});

struct CrmWorld {
  TimeSeriesPanel panel;
  Matrix dq_dt;  // exact left derivative at each row
  Matrix dp_dt;
  Matrix clean_q;
};

/// Rates from the RK4 integration of the CRM ODE under the schedule, plus
/// optional Gaussian noise of std `noise * mean(q)`, clipped at zero.
/// Injector BHP is reported as `injector_bhp`.
CrmWorld generate_crm_world(const crm::CrmParams& params, const Schedule& schedule,
                            const Vector& q0, double noise, std::uint64_t seed,
                            double injector_bhp = 4000.0, double substep = 1e-2);

struct Case {
  std::string name;
  eikonal::ReservoirGrid grid;
  WellNetwork wells;
  Schedule schedule;
};

/// Fixed waterflood schedule for two injectors and four producers.
Schedule default_schedule(double horizon = 2000.0, double step = 10.0);

/// Cases sharing one channel field and schedule, each with 2 injectors and
/// 4 producers on distinct random cells.
std::vector<Case> make_cases(const ChannelFieldConfig& grid_config, int count, std::uint64_t seed,
                             int num_injectors = 2, int num_producers = 4);

}  // namespace pignn::synth
