#include "pignn/crm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace pignn::crm {

void CrmParams::validate() const {
  const auto np = tau.size();
  if (productivity.size() != np || connectivity.cols() != np) {
    throw Error("CRM parameter shapes disagree");
  }
  for (Eigen::Index j = 0; j < np; ++j) {
    if (!(tau[j] > 0.0)) throw Error("CRM time constant must be positive (producer " + std::to_string(j) + ")");
    if (!(productivity[j] > 0.0)) throw Error("CRM productivity index must be positive");
  }
  if ((connectivity.array() < 0.0).any() || (connectivity.array() > 1.0).any()) {
    throw Error("CRM connectivity entries must lie in [0, 1]");
  }
  if ((connectivity.rowwise().sum().array() > 1.0 + 1e-12).any()) {
    throw Error("CRM connectivity rows must sum to at most 1");
  }
}

Vector CrmParams::pore_volume(double ct) const {
  return (tau.array() * productivity.array() / ct).matrix();
}

CrmInputs CrmInputs::from_panel(const TimeSeriesPanel& p) {
  return {p.times, p.injection, p.producer_bhp};
}

CrmInputs CrmInputs::slice(Eigen::Index begin, Eigen::Index end) const {
  const auto n = end - begin;
  return {times.segment(begin, n), injection.middleRows(begin, n), producer_bhp.middleRows(begin, n)};
}

void CrmInputs::validate(Eigen::Index np, Eigen::Index ni) const {
  const auto n = times.size();
  if (n < 1) throw Error("CRM inputs have no rows");
  if (injection.rows() != n || producer_bhp.rows() != n) throw Error("CRM inputs are not aligned");
  if (injection.cols() != ni || producer_bhp.cols() != np) throw Error("CRM input column counts disagree with parameters");
  for (Eigen::Index k = 1; k < n; ++k) {
    if (!(times[k] - times[k - 1] > 0.0)) {
      throw Error("CRM time step must be positive (row " + std::to_string(k) + ")");
    }
  }
}

Matrix crm_forecast(const CrmParams& params, const CrmInputs& in, const Vector& q0) {
  params.validate();
  const auto np = params.tau.size();
  const auto ni = params.connectivity.rows();
  in.validate(np, ni);
  if (q0.size() != np) throw Error("q0 size mismatch");
  const auto n = in.times.size();
  Matrix q(n, np);
  // Allocated injection per interval [n x N_P].
  const Matrix allocated = in.injection * params.connectivity;
  for (Eigen::Index j = 0; j < np; ++j) {
    const double tau = params.tau[j];
    const double tj = tau * params.productivity[j];
    for (Eigen::Index m = 0; m < n; ++m) {
      const double tn = in.times[m];
      double value = q0[j] * std::exp(-(tn - in.times[0]) / tau);
      for (Eigen::Index k = 1; k <= m; ++k) {
        const double dt = in.times[k] - in.times[k - 1];
        const double slope = (in.producer_bhp(k, j) - in.producer_bhp(k - 1, j)) / dt;
        value += std::exp(-(tn - in.times[k]) / tau) * (-std::expm1(-dt / tau)) *
                 (allocated(k, j) - tj * slope);
      }
      q(m, j) = value;
    }
  }
  return q;
}

Matrix integrate_crm_ode(const CrmParams& params, const CrmInputs& in, const Vector& q0,
                         double substep) {
  if (!(substep > 0.0)) throw Error("RK4 substep must be positive");
  params.validate();
  const auto np = params.tau.size();
  in.validate(np, params.connectivity.rows());
  if (q0.size() != np) throw Error("q0 size mismatch");
  const auto n = in.times.size();
  Matrix q(n, np);
  q.row(0) = q0.transpose();
  const Matrix allocated = in.injection * params.connectivity;
  for (Eigen::Index j = 0; j < np; ++j) {
    const double tau = params.tau[j];
    const double tj = tau * params.productivity[j];
    double state = q0[j];
    for (Eigen::Index k = 1; k < n; ++k) {
      const double dt = in.times[k] - in.times[k - 1];
      const double slope = (in.producer_bhp(k, j) - in.producer_bhp(k - 1, j)) / dt;
      const double forcing = allocated(k, j) - tj * slope;
      const auto steps = static_cast<long>(std::ceil(dt / substep - 1e-9));
      const double h = dt / static_cast<double>(std::max(1L, steps));
      auto rhs = [&](double y) { return (forcing - y) / tau; };
      for (long s = 0; s < std::max(1L, steps); ++s) {
        const double k1 = rhs(state);
        const double k2 = rhs(state + 0.5 * h * k1);
        const double k3 = rhs(state + 0.5 * h * k2);
        const double k4 = rhs(state + h * k3);
        state += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      q(k, j) = state;
    }
  }
  return q;
}

void project_capped_simplex(Eigen::Ref<Vector> row, const Vector& caps) {
  auto clipped = [&](double shift) {
    Vector x(row.size());
    for (Eigen::Index j = 0; j < row.size(); ++j) x[j] = std::clamp(row[j] - shift, 0.0, caps[j]);
    return x;
  };
  Vector x = clipped(0.0);
  if (x.sum() > 1.0) {
    // Sum of clip(row - shift) is nonincreasing in shift; bisect for sum = 1.
    double lo = 0.0;
    double hi = row.maxCoeff();
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (clipped(mid).sum() > 1.0) lo = mid; else hi = mid;
    }
    x = clipped(hi);
    const double s = x.sum();
    if (s > 1.0) x /= s;
  }
  row = x;
}

namespace {

// Flat layout: [log tau (N_P) | log J (N_P) | F column-major (N_I * N_P)].
struct FitProblem {
  const CrmInputs& in;
  const Matrix& observed;
  IndexRange train;
  Matrix caps;  // structure caps per F entry
  Eigen::Index np;
  Eigen::Index ni;
  double scale;  // objective normalization, sum of squared observations

  Eigen::Index size() const { return 2 * np + ni * np; }

  CrmParams unpack(const Vector& theta) const {
    CrmParams p;
    p.tau = theta.head(np).array().exp().matrix();
    p.productivity = theta.segment(np, np).array().exp().matrix();
    p.connectivity = Eigen::Map<const Matrix>(theta.data() + 2 * np, ni, np);
    return p;
  }

  void project(Vector& theta) const {
    constexpr double kLogMin = -13.8;  // ~1e-6
    constexpr double kLogMax = 13.8;   // ~1e6
    theta.head(2 * np) = theta.head(2 * np).cwiseMax(kLogMin).cwiseMin(kLogMax);
    Eigen::Map<Matrix> f(theta.data() + 2 * np, ni, np);
    for (Eigen::Index i = 0; i < ni; ++i) {
      Vector row = f.row(i).transpose();
      project_capped_simplex(row, caps.row(i).transpose());
      f.row(i) = row.transpose();
    }
  }

  // Normalized sum of squared training residuals; fills the gradient when
  // requested. The recursion is the interval-by-interval form of the
  // closed-form solution.
  double evaluate(const Vector& theta, Vector* grad) const {
    const auto p = unpack(theta);
    const auto b = train.begin;
    const auto n = train.size();
    if (grad) grad->setZero(size());
    double total = 0.0;
    Vector dq_dF(ni);
    for (Eigen::Index j = 0; j < np; ++j) {
      const double tau = p.tau[j];
      const double jj = p.productivity[j];
      double q = observed(b, j);
      double dq_dtau = 0.0;
      double dq_dJ = 0.0;
      dq_dF.setZero();
      for (Eigen::Index k = 1; k < n; ++k) {
        const auto r = b + k;
        const double dt = in.times[r] - in.times[r - 1];
        const double slope = (in.producer_bhp(r, j) - in.producer_bhp(r - 1, j)) / dt;
        const double a = std::exp(-dt / tau);
        double u = 0.0;
        for (Eigen::Index i = 0; i < ni; ++i) u += p.connectivity(i, j) * in.injection(r, i);
        const double target = u - tau * jj * slope;
        if (grad) {
          const double da = a * dt / (tau * tau);
          dq_dtau = a * dq_dtau + da * (q - target) - (1.0 - a) * jj * slope;
          dq_dJ = a * dq_dJ - (1.0 - a) * tau * slope;
          for (Eigen::Index i = 0; i < ni; ++i) {
            dq_dF[i] = a * dq_dF[i] + (1.0 - a) * in.injection(r, i);
          }
        }
        q = a * q + (1.0 - a) * target;
        const double res = observed(r, j) - q;
        total += res * res;
        if (grad) {
          const double w = -2.0 * res / scale;
          (*grad)[j] += w * dq_dtau * tau;
          (*grad)[np + j] += w * dq_dJ * jj;
          for (Eigen::Index i = 0; i < ni; ++i) (*grad)[2 * np + j * ni + i] += w * dq_dF[i];
        }
      }
    }
    return total / scale;
  }
};

// Monotone spectral projected gradient with Armijo backtracking.
RestartTrace minimize(const FitProblem& prob, Vector& theta, const FitOptions& opt) {
  RestartTrace trace;
  prob.project(theta);
  Vector g(prob.size());
  double f = prob.evaluate(theta, &g);
  if (!std::isfinite(f)) {
    trace.failed = true;
    return trace;
  }
  trace.objective.push_back(f);
  double alpha = 1.0 / std::max(1e-12, g.lpNorm<Eigen::Infinity>());
  Vector trial(prob.size());
  Vector g_new(prob.size());
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector d = theta - alpha * g;
    prob.project(d);
    d -= theta;
    const double slope = g.dot(d);
    if (d.lpNorm<Eigen::Infinity>() < 1e-15 || slope >= 0.0) break;
    double lambda = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = theta + lambda * d;
      f_new = prob.evaluate(trial, &g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * lambda * slope) {
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
    const Vector s = trial - theta;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : 1e4 * alpha;
    alpha = std::min(alpha, 1e12);
    theta = trial;
    g = g_new;
    f = f_new;
    trace.objective.push_back(f);
    const auto w = static_cast<std::size_t>(opt.stall_window);
    if (trace.objective.size() > w) {
      const double old = trace.objective[trace.objective.size() - 1 - w];
      if (old - f <= opt.tolerance * std::max(old, 1e-300)) break;
    }
  }
  return trace;
}

}  // namespace

FitResult crm_fit(const CrmInputs& in, const Matrix& observed, IndexRange train,
                  const FitOptions& opt) {
  const auto np = observed.cols();
  const auto ni = in.injection.cols();
  in.validate(np, ni);
  if (observed.rows() != in.times.size()) throw Error("observations are not aligned with inputs");
  if (train.size() < 10) throw Error("CRM fitting needs at least 10 training rows");
  if (opt.multistarts < 1) throw Error("CRM fitting needs at least one start");

  FitProblem prob{in, observed, train, Matrix::Ones(ni, np), np, ni, 1.0};
  if (opt.structure) {
    if (opt.structure->rows() != ni || opt.structure->cols() != np) {
      throw Error("CRM structure mask has the wrong shape");
    }
    prob.caps = (opt.structure->array() > 0.0).cast<double>().matrix();
  }
  prob.scale = std::max(1e-300, observed.middleRows(train.begin + 1, train.size() - 1).squaredNorm());

  const double span = in.times[train.end - 1] - in.times[train.begin];
  double min_dt = span;
  for (auto k = train.begin + 1; k < train.end; ++k) min_dt = std::min(min_dt, in.times[k] - in.times[k - 1]);
  const double q_mean = std::max(1e-6, observed.middleRows(train.begin, train.size()).mean());
  const double p_mean = std::max(1.0, std::abs(in.producer_bhp.middleRows(train.begin, train.size()).mean()));

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FitResult result;
  result.objective = std::numeric_limits<double>::infinity();
  for (int start = 0; start < opt.multistarts; ++start) {
    Vector theta(prob.size());
    for (Eigen::Index j = 0; j < np; ++j) {
      theta[j] = std::log(min_dt) + unit(rng) * (std::log(span) - std::log(min_dt));
      theta[np + j] = std::log(q_mean / p_mean) + (unit(rng) - 0.5) * 4.0;
    }
    for (Eigen::Index e = 0; e < ni * np; ++e) theta[2 * np + e] = unit(rng) / static_cast<double>(np);
    auto trace = minimize(prob, theta, opt);
    if (!trace.failed) {
      const double f = prob.evaluate(theta, nullptr);
      if (std::isfinite(f)) {
        ++result.successful_restarts;
        if (f < result.objective) {
          result.objective = f;
          result.params = prob.unpack(theta);
        }
      } else {
        trace.failed = true;
      }
    }
    result.restarts.push_back(std::move(trace));
  }
  if (result.successful_restarts == 0) throw Error("every CRM fitting restart failed");
  result.objective *= prob.scale;
  return result;
}

FitResult crm_fit(const TimeSeriesPanel& panel, const DataSplit& split, double ct,
                  const FitOptions& options) {
  if (!(ct > 0.0)) throw Error("total compressibility must be positive");
  return crm_fit(CrmInputs::from_panel(panel), panel.production, split.train, options);
}

}  // namespace pignn::crm
