#pragma once

// Producer-based capacitance-resistance model.
//
//   tau_j dq_j/dt + q_j = sum_i F_ij I_i - tau_j J_j dp_wf,j/dt
//
// Row 0 of every input is the initial instant t_0. Row k >= 1 describes the
// interval (t_{k-1}, t_k]: injection I(k, :) is held constant over it and the
// producer BHP varies linearly from p_wf(k-1) to p_wf(k).

#include "pignn/core.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace pignn::crm {

struct CrmParams {
  Vector tau;           // [N_P] days
  Vector productivity;  // [N_P] bbl/day/psi
  Matrix connectivity;  // [N_I x N_P]

  /// Checks tau > 0, J > 0, 0 <= F <= 1 and row sums <= 1.
  void validate() const;
  /// Drainage pore volume V_p = tau J / C_t in bbl.
  Vector pore_volume(double total_compressibility) const;
};

struct CrmInputs {
  Vector times;         // [N_T]
  Matrix injection;     // [N_T x N_I]
  Matrix producer_bhp;  // [N_T x N_P]

  static CrmInputs from_panel(const TimeSeriesPanel& panel);
  CrmInputs slice(Eigen::Index begin, Eigen::Index end) const;
  void validate(Eigen::Index num_producers, Eigen::Index num_injectors) const;
};

/// Closed-form step-response solution, evaluated as the full sum over past
/// intervals for every output row. Row 0 of the result equals q0.
Matrix crm_forecast(const CrmParams& params, const CrmInputs& inputs, const Vector& q0);

/// Classical RK4 on the governing ODE with piecewise-constant injection and
/// piecewise-linear BHP. Each interval is cut into ceil(dt / substep) equal
/// steps.
Matrix integrate_crm_ode(const CrmParams& params, const CrmInputs& inputs, const Vector& q0,
                         double substep);

struct FitOptions {
  int multistarts = 8;
  int max_iterations = 20000;
  /// Stop when the relative objective decrease over `stall_window`
  /// iterations falls below this.
  double tolerance = 1e-14;
  int stall_window = 50;
  std::uint64_t seed = 20240601;
  /// Optional [N_I x N_P] 0/1 structure; zero entries pin F_ij = 0.
  std::optional<Matrix> structure;
};

struct RestartTrace {
  std::vector<double> objective;  // accepted-step objective values
  bool failed = false;
};

struct FitResult {
  CrmParams params;
  double objective = 0.0;  // sum of squared training residuals
  int successful_restarts = 0;
  std::vector<RestartTrace> restarts;
};

/// Least-squares fit over the training rows by spectral projected gradient
/// on (log tau, log J, F) with Armijo backtracking. F rows are projected onto
/// {0 <= F_ij <= 1, sum_j F_ij <= 1}.
FitResult crm_fit(const TimeSeriesPanel& panel, const DataSplit& split,
                  double total_compressibility, const FitOptions& options = {});
FitResult crm_fit(const CrmInputs& inputs, const Matrix& observed, IndexRange train,
                  const FitOptions& options = {});

/// Euclidean projection of one row onto {0 <= x_j <= cap_j, sum x <= 1}.
void project_capped_simplex(Eigen::Ref<Vector> row, const Vector& caps);

}  // namespace pignn::crm
