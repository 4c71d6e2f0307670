#include "pignn/core.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace pignn {

std::vector<std::string> WellNetwork::injector_ids() const {
  std::vector<std::string> ids;
  for (const auto& w : injectors) ids.push_back(w.id);
  return ids;
}

std::vector<std::string> WellNetwork::producer_ids() const {
  std::vector<std::string> ids;
  for (const auto& w : producers) ids.push_back(w.id);
  return ids;
}

void WellNetwork::validate() const {
  if (injectors.empty() || producers.empty()) {
    throw Error("well network needs at least one injector and one producer");
  }
  std::set<std::string> seen;
  for (const auto* list : {&injectors, &producers}) {
    for (const auto& w : *list) {
      if (!seen.insert(w.id).second) throw Error("duplicate well id '" + w.id + "'");
      if (!std::isfinite(w.x) || !std::isfinite(w.y)) {
        throw Error("well '" + w.id + "' has non-finite coordinates");
      }
    }
  }
}

namespace {

void check_finite(const Matrix& m, const char* name) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << name << " has a non-finite entry at row " << r << ", column " << c;
        throw Error(os.str());
      }
    }
  }
}

}  // namespace

void TimeSeriesPanel::validate() const {
  const auto n = times.size();
  if (n < 1) throw Error("panel has no rows");
  if (injection.rows() != n || injector_bhp.rows() != n || production.rows() != n ||
      producer_bhp.rows() != n) {
    throw Error("panel matrices do not share the time axis length");
  }
  if (injector_bhp.cols() != injection.cols() || producer_bhp.cols() != production.cols()) {
    throw Error("panel column counts disagree between rates and pressures");
  }
  if (static_cast<Eigen::Index>(injector_ids.size()) != injection.cols() ||
      static_cast<Eigen::Index>(producer_ids.size()) != production.cols()) {
    throw Error("panel id lists do not match column counts");
  }
  check_finite(times, "times");
  check_finite(injection, "injection");
  check_finite(injector_bhp, "injector_bhp");
  check_finite(production, "production");
  check_finite(producer_bhp, "producer_bhp");
  for (Eigen::Index k = 1; k < n; ++k) {
    if (!(times[k] > times[k - 1])) {
      throw Error("panel times must be strictly increasing (row " + std::to_string(k) + ")");
    }
  }
  if ((injection.array() < 0.0).any()) throw Error("injection rates must be nonnegative");
  if ((production.array() < 0.0).any()) throw Error("production rates must be nonnegative");
}

TimeSeriesPanel TimeSeriesPanel::slice(Eigen::Index begin, Eigen::Index end) const {
  if (begin < 0 || end > rows() || begin >= end) throw Error("invalid panel slice");
  const auto n = end - begin;
  TimeSeriesPanel out;
  out.times = times.segment(begin, n);
  out.injection = injection.middleRows(begin, n);
  out.injector_bhp = injector_bhp.middleRows(begin, n);
  out.production = production.middleRows(begin, n);
  out.producer_bhp = producer_bhp.middleRows(begin, n);
  out.injector_ids = injector_ids;
  out.producer_ids = producer_ids;
  return out;
}

DataSplit split_panel(Eigen::Index num_rows, const SplitFractions& f) {
  if (!(f.train > 0.0 && f.validation > 0.0 && f.test > 0.0)) {
    throw Error("split fractions must be positive");
  }
  if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw Error("split fractions must sum to 1");
  }
  const auto n = static_cast<double>(num_rows);
  // The epsilon keeps exact products such as 0.7 * 100 from flooring to 69.
  const auto n_train = static_cast<Eigen::Index>(std::floor(f.train * n + 1e-9));
  const auto n_val = static_cast<Eigen::Index>(std::floor(f.validation * n + 1e-9));
  DataSplit split;
  split.train = {0, n_train};
  split.validation = {n_train, n_train + n_val};
  split.test = {n_train + n_val, num_rows};
  if (split.train.empty() || split.validation.empty() || split.test.empty()) {
    throw Error("split of " + std::to_string(num_rows) + " rows leaves an empty range");
  }
  return split;
}

DataSplit split_panel(const TimeSeriesPanel& panel, const SplitFractions& fractions) {
  return split_panel(panel.rows(), fractions);
}

MinMaxScaler MinMaxScaler::fit(const Matrix& values, IndexRange rows) {
  if (rows.empty() || rows.begin < 0 || rows.end > values.rows()) {
    throw Error("scaler fit range is empty or out of bounds");
  }
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    if (!values.col(c).allFinite()) {
      throw Error("scaler input has a non-finite value in column " + std::to_string(c));
    }
  }
  const auto block = values.middleRows(rows.begin, rows.size());
  MinMaxScaler s;
  s.min_ = block.colwise().minCoeff().transpose();
  s.max_ = block.colwise().maxCoeff().transpose();
  return s;
}

MinMaxScaler MinMaxScaler::fit(const Matrix& values) { return fit(values, {0, values.rows()}); }

MinMaxScaler MinMaxScaler::from_state(Vector min, Vector max) {
  if (min.size() != max.size()) throw Error("scaler state size mismatch");
  MinMaxScaler s;
  s.min_ = std::move(min);
  s.max_ = std::move(max);
  return s;
}

Vector MinMaxScaler::range() const { return max_ - min_; }

Matrix MinMaxScaler::transform(const Matrix& values) const {
  if (values.cols() != columns()) throw Error("scaler column count mismatch");
  Matrix out(values.rows(), values.cols());
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    const double span = max_[c] - min_[c];
    if (span > 0.0) {
      out.col(c) = (values.col(c).array() - min_[c]) / span;
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

Matrix MinMaxScaler::inverse(const Matrix& scaled) const {
  if (scaled.cols() != columns()) throw Error("scaler column count mismatch");
  Matrix out(scaled.rows(), scaled.cols());
  for (Eigen::Index c = 0; c < scaled.cols(); ++c) {
    const double span = max_[c] - min_[c];
    out.col(c) = (scaled.col(c).array() * span + min_[c]).matrix();
  }
  return out;
}

ScaledMatrix fit_apply_scaler(const Matrix& values, IndexRange fit_rows) {
  ScaledMatrix out;
  out.scaler = MinMaxScaler::fit(values, fit_rows);
  out.values = out.scaler.transform(values);
  return out;
}

void FluidProps::validate() const {
  if (!(total_compressibility > 0.0) || !(viscosity > 0.0)) {
    throw Error("fluid compressibility and viscosity must be positive");
  }
}

double rmse(std::span<const double> observed, std::span<const double> predicted) {
  if (observed.size() != predicted.size()) throw Error("rmse length mismatch");
  if (observed.empty()) throw Error("rmse of empty series");
  double acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - predicted[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(observed.size()));
}

double rmse(const Eigen::Ref<const Vector>& observed, const Eigen::Ref<const Vector>& predicted) {
  return rmse(std::span<const double>(observed.data(), static_cast<std::size_t>(observed.size())),
              std::span<const double>(predicted.data(), static_cast<std::size_t>(predicted.size())));
}

double total_rmse(std::span<const double> per_producer) {
  return std::accumulate(per_producer.begin(), per_producer.end(), 0.0);
}

double pearson(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error("pearson needs equal sizes >= 2");
  const Eigen::Map<const Vector> x(a.data(), a.size());
  const Eigen::Map<const Vector> y(b.data(), b.size());
  const Vector dx = x.array() - x.mean();
  const Vector dy = y.array() - y.mean();
  const double denom = std::sqrt(dx.squaredNorm() * dy.squaredNorm());
  if (denom == 0.0) return 0.0;
  return dx.dot(dy) / denom;
}

}  // namespace pignn
