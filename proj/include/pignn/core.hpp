#pragma once

// Shared domain types for the well-network forecasting toolkit.
//
// Units are fixed across the library: days, psi, bbl/day, bbl, 1/psi, mD, cP.
// A producer time constant tau = C_t * V_p / J is therefore in days.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pignn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Well {
  std::string id;
  double x = 0.0;
  double y = 0.0;
};

/// Injector and producer locations. Coordinates share the length unit of the
/// grid cell sizes (cell index = floor(x / dx)).
struct WellNetwork {
  std::vector<Well> injectors;
  std::vector<Well> producers;

  std::size_t num_injectors() const { return injectors.size(); }
  std::size_t num_producers() const { return producers.size(); }
  std::vector<std::string> injector_ids() const;
  std::vector<std::string> producer_ids() const;

  /// Throws if ids collide or either list is empty.
  void validate() const;
};

/// Aligned time series for one well network. Row k of I holds the injection
/// rate over (t_{k-1}, t_k]; rates and pressures at row k are reported at t_k.
struct TimeSeriesPanel {
  Vector times;
  Matrix injection;      // [N_T x N_I] bbl/day
  Matrix injector_bhp;   // [N_T x N_I] psi
  Matrix production;     // [N_T x N_P] bbl/day
  Matrix producer_bhp;   // [N_T x N_P] psi
  std::vector<std::string> injector_ids;
  std::vector<std::string> producer_ids;

  Eigen::Index rows() const { return times.size(); }
  Eigen::Index num_injectors() const { return injection.cols(); }
  Eigen::Index num_producers() const { return production.cols(); }

  void validate() const;
  /// Rows [begin, end) as a new panel.
  TimeSeriesPanel slice(Eigen::Index begin, Eigen::Index end) const;
};

struct IndexRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;
  Eigen::Index size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(Eigen::Index i) const { return i >= begin && i < end; }
};

struct DataSplit {
  IndexRange train;
  IndexRange validation;
  IndexRange test;
};

struct SplitFractions {
  double train = 0.70;
  double validation = 0.05;
  double test = 0.25;
};

/// Chronological contiguous split: floor for train and validation, remainder
/// to test.
DataSplit split_panel(Eigen::Index num_rows, const SplitFractions& fractions = {});
DataSplit split_panel(const TimeSeriesPanel& panel, const SplitFractions& fractions = {});

/// Per-column min-max scaler. Constant columns map to 0 and invert to the
/// stored constant.
class MinMaxScaler {
 public:
  MinMaxScaler() = default;

  static MinMaxScaler fit(const Matrix& values, IndexRange fit_rows);
  static MinMaxScaler fit(const Matrix& values);
  static MinMaxScaler from_state(Vector min, Vector max);

  Matrix transform(const Matrix& values) const;
  Matrix inverse(const Matrix& scaled) const;

  const Vector& min() const { return min_; }
  const Vector& max() const { return max_; }
  /// max - min per column, with 0 for degenerate columns.
  Vector range() const;
  Eigen::Index columns() const { return min_.size(); }

 private:
  Vector min_;
  Vector max_;
};

struct ScaledMatrix {
  Matrix values;
  MinMaxScaler scaler;
};

ScaledMatrix fit_apply_scaler(const Matrix& values, IndexRange fit_rows);

/// Allocation fractions F_ij from injector i to producer j.
struct ConnectivityMatrix {
  Matrix values;  // [N_I x N_P]
  std::vector<std::string> injector_ids;
  std::vector<std::string> producer_ids;
};

struct FluidProps {
  double total_compressibility = 1e-5;  // 1/psi
  double viscosity = 1.0;               // cP

  void validate() const;
};

double rmse(std::span<const double> observed, std::span<const double> predicted);
double rmse(const Eigen::Ref<const Vector>& observed, const Eigen::Ref<const Vector>& predicted);
/// Sum of per-producer values (tabulated totals are sums, not norms).
double total_rmse(std::span<const double> per_producer);

/// Pearson correlation between two equally sized matrices read as flat vectors.
double pearson(const Matrix& a, const Matrix& b);

}  // namespace pignn
