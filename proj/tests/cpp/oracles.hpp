#pragma once

#include "pignn/core.hpp"
#include "pignn/crm.hpp"
#include "pignn/eikonal.hpp"

#include <cmath>
#include <limits>
#include <queue>
#include <random>

namespace testing {

/// Positive field exp(sum of a few random plane waves), ratio about 5:1.
inline pignn::Matrix smooth_speed(int nx, int ny, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  pignn::Matrix s(ny, nx);
  s.setZero();
  for (int w = 0; w < 4; ++w) {
    const double kx = (u(rng) - 0.5) * 0.3;
    const double ky = (u(rng) - 0.5) * 0.3;
    const double phase = 6.283185307179586 * u(rng);
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) s(iy, ix) += 0.4 * std::sin(kx * ix + ky * iy + phase);
    }
  }
  return s.array().exp().matrix();
}

/// Shortest paths over the 8-neighbour cell graph; an edge costs its length
/// divided by the mean speed of its two endpoints.
inline pignn::Matrix dijkstra8(const pignn::Matrix& speed, double dx, double dy, pignn::eikonal::Cell src) {
  const int ny = static_cast<int>(speed.rows());
  const int nx = static_cast<int>(speed.cols());
  pignn::Matrix t = pignn::Matrix::Constant(ny, nx, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  t(src.iy, src.ix) = 0.0;
  heap.push({0.0, src.iy * nx + src.ix});
  while (!heap.empty()) {
    const auto [d, id] = heap.top();
    heap.pop();
    const int iy = id / nx, ix = id % nx;
    if (d > t(iy, ix)) continue;
    for (int oy = -1; oy <= 1; ++oy) {
      for (int ox = -1; ox <= 1; ++ox) {
        if (ox == 0 && oy == 0) continue;
        const int jx = ix + ox, jy = iy + oy;
        if (jx < 0 || jy < 0 || jx >= nx || jy >= ny) continue;
        const double len = std::hypot(ox * dx, oy * dy);
        const double nd = d + len / (0.5 * (speed(iy, ix) + speed(jy, jx)));
        if (nd < t(jy, jx)) {
          t(jy, jx) = nd;
          heap.push({nd, jy * nx + jx});
        }
      }
    }
  }
  return t;
}

struct CrmCase {
  pignn::crm::CrmParams params;
  pignn::crm::CrmInputs inputs;
  pignn::Vector q0;
};

/// Random admissible CRM problem: stepwise injection held over runs of
/// intervals, slowly varying BHP, uneven time steps.
inline CrmCase random_crm_case(unsigned seed, Eigen::Index rows = 201, Eigen::Index ni = 2, Eigen::Index np = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CrmCase c;
  c.params.tau.resize(np);
  c.params.productivity.resize(np);
  c.params.connectivity.resize(ni, np);
  for (Eigen::Index j = 0; j < np; ++j) {
    c.params.tau[j] = 5.0 + 95.0 * u(rng);
    c.params.productivity[j] = 0.1 + 1.9 * u(rng);
  }
  for (Eigen::Index i = 0; i < ni; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < np; ++j) sum += (c.params.connectivity(i, j) = u(rng) + 0.05);
    c.params.connectivity.row(i) *= (0.5 + 0.45 * u(rng)) / sum;
  }
  auto& in = c.inputs;
  in.times.resize(rows);
  in.injection.resize(rows, ni);
  in.producer_bhp.resize(rows, np);
  in.times[0] = 0.0;
  for (Eigen::Index k = 1; k < rows; ++k) in.times[k] = in.times[k - 1] + 1.0 + 14.0 * u(rng);
  for (Eigen::Index i = 0; i < ni; ++i) {
    double rate = 1000.0 * u(rng);
    for (Eigen::Index k = 0; k < rows; ++k) {
      if (u(rng) < 0.1) rate = 1000.0 * u(rng);
      in.injection(k, i) = rate;
    }
  }
  for (Eigen::Index j = 0; j < np; ++j) {
    double p = 900.0 + 200.0 * u(rng);
    for (Eigen::Index k = 0; k < rows; ++k) {
      p += 2.0 * (u(rng) - 0.5);
      in.producer_bhp(k, j) = p;
    }
  }
  c.q0.resize(np);
  for (Eigen::Index j = 0; j < np; ++j) c.q0[j] = 50.0 + 450.0 * u(rng);
  return c;
}

/// max |a - b| / max(|b|, 1) over all entries.
inline double max_rel_error(const pignn::Matrix& a, const pignn::Matrix& b) {
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

/// Left time derivative of the closed-form CRM rates at every row, recovered
/// without the ODE: on each interval the rate is A + C r^s, so the values at
/// the interval start, middle and end fix r and C. Row 0 takes the right
/// derivative over the first interval.
inline pignn::Matrix exponential_derivative(const pignn::crm::CrmParams& params,
                                            const pignn::crm::CrmInputs& in, const pignn::Vector& q0) {
  const Eigen::Index n = in.times.size();
  const Eigen::Index np = params.tau.size();
  pignn::crm::CrmInputs fine;
  fine.times.resize(2 * n - 1);
  fine.injection.resize(2 * n - 1, in.injection.cols());
  fine.producer_bhp.resize(2 * n - 1, np);
  fine.times[0] = in.times[0];
  fine.injection.row(0) = in.injection.row(0);
  fine.producer_bhp.row(0) = in.producer_bhp.row(0);
  for (Eigen::Index k = 1; k < n; ++k) {
    fine.times[2 * k - 1] = 0.5 * (in.times[k - 1] + in.times[k]);
    fine.times[2 * k] = in.times[k];
    fine.injection.row(2 * k - 1) = in.injection.row(k);
    fine.injection.row(2 * k) = in.injection.row(k);
    fine.producer_bhp.row(2 * k - 1) = 0.5 * (in.producer_bhp.row(k - 1) + in.producer_bhp.row(k));
    fine.producer_bhp.row(2 * k) = in.producer_bhp.row(k);
  }
  const pignn::Matrix q = pignn::crm::crm_forecast(params, fine, q0);
  pignn::Matrix d(n, np);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index seg = std::max<Eigen::Index>(k, 1);
    const double h = 0.5 * (in.times[seg] - in.times[seg - 1]);
    for (Eigen::Index j = 0; j < np; ++j) {
      const double qa = q(2 * seg - 2, j), qm = q(2 * seg - 1, j), qb = q(2 * seg, j);
      const double d1 = qa - qm, d2 = qm - qb;
      if (std::abs(d1) < 1e-12 * std::max(1.0, std::abs(qa))) {
        d(k, j) = 0.0;
        continue;
      }
      const double r = d2 / d1;
      const double lambda = -std::log(r) / h;
      const double c = d1 / (1.0 - r);
      d(k, j) = k == 0 ? -lambda * c : -lambda * c * r * r;
    }
  }
  return d;
}

}  // namespace testing
