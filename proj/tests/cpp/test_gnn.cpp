#include "pignn/gnn.hpp"
#include "pignn/synth.hpp"

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

#include <cmath>
#include <random>

using namespace pignn;
using namespace pignn::gnn;

namespace {

crm::CrmParams world_params() {
  crm::CrmParams p;
  p.tau.resize(4);
  p.tau << 30.0, 60.0, 45.0, 80.0;
  p.productivity.resize(4);
  p.productivity << 0.5, 0.8, 0.3, 1.0;
  p.connectivity.resize(2, 4);
  p.connectivity << 0.4, 0.1, 0.3, 0.15, 0.05, 0.5, 0.2, 0.2;
  return p;
}

synth::Schedule drifting_schedule(double horizon) {
  auto s = synth::default_schedule(horizon, 10.0);
  s.bhp_drift = Vector::LinSpaced(4, -0.05, 0.03);
  return s;
}

ModelConfig small_config(GraphMode mode) {
  ModelConfig c;
  c.gcn_width = 4;
  c.hidden_width = 6;
  c.mode = mode;
  return c;
}

Vector random_params(Eigen::Index n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

}  // namespace

TEST_CASE("normalized aggregation of one injector over two producers") {
  ad::Tape t;
  Matrix a(1, 2);
  a << 1.0, 1.0;
  const auto n = normalized_adjacency(t.constant(a));
  CHECK(n.value()(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  Matrix w(2, 1);
  w << 1.0, 0.0;
  const Matrix out = gcn_forward(w, Matrix::Constant(1, 1, 4.0), Matrix::Zero(2, 1), a, false);
  CHECK(out(0, 0) == doctest::Approx(4.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(out(1, 0) == doctest::Approx(2.8284).epsilon(1e-4));
}

TEST_CASE("combine then project with a linear activation") {
  const Matrix w = Matrix::Ones(2, 1);
  const Matrix out = gcn_forward(w, Matrix::Constant(1, 1, 3.0), Matrix::Constant(1, 1, 2.0), Matrix::Ones(1, 1), false);
  CHECK(out(0, 0) == 5.0);
}

TEST_CASE("zero injector features leave only the producer path") {
  std::mt19937_64 rng(3);
  const Matrix w = random_params(6, rng, 1.0).reshaped(2, 3);
  Matrix hp(6, 1);
  hp << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  Matrix a1(2, 2), a2(2, 2);
  a1 << 1, 0, 1, 1;
  a2 << 0.3, 0.9, 0.0, 0.4;
  const Matrix o1 = gcn_forward(w, Matrix::Zero(3, 2), hp, a1);
  const Matrix o2 = gcn_forward(w, Matrix::Zero(3, 2), hp, a2);
  CHECK(o1 == o2);
  const Matrix expect = (hp * w.row(1)).array().tanh().matrix();
  CHECK((o1 - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("physics residual equals a hand evaluation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  const int nt = 7, ni = 2, np = 3;
  Matrix q(nt, np), pw(nt, np), J(nt, np), V(nt, np), dq(nt, np), dp(nt, np), I(nt, ni), F(ni, np);
  for (Matrix* m : {&q, &pw, &J, &V, &dq, &dp, &I, &F}) {
    for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = u(rng);
  }
  const double ct = 3e-3;
  const Matrix r = physics_residual(q, pw, J, V, dq, dp, I, F, ct);
  for (int t = 0; t < nt; ++t) {
    for (int j = 0; j < np; ++j) {
      double alloc = 0.0;
      for (int i = 0; i < ni; ++i) alloc += I(t, i) * F(i, j);
      const double hand = ct * V(t, j) / J(t, j) * dq(t, j) + q(t, j) + ct * V(t, j) * dp(t, j) - alloc;
      CHECK(r(t, j) == doctest::Approx(hand).epsilon(1e-14));
    }
  }
}

TEST_CASE("residual vanishes at steady state and along pure depletion") {
  Matrix I(3, 1), F(1, 1);
  I << 200.0, 200.0, 200.0;
  F << 0.5;
  const Matrix J = Matrix::Constant(3, 1, 0.5);
  const double ct = 1e-5, tau = 40.0;
  const Matrix V = Matrix::Constant(3, 1, tau * 0.5 / ct);
  CHECK(physics_residual(Matrix::Constant(3, 1, 100.0), Matrix::Zero(3, 1), J, V, Matrix::Zero(3, 1),
                         Matrix::Zero(3, 1), I, F, ct)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  Matrix q(3, 1), dq(3, 1);
  for (int k = 0; k < 3; ++k) {
    q(k, 0) = 300.0 * std::exp(-10.0 * k / tau);
    dq(k, 0) = -q(k, 0) / tau;
  }
  CHECK(physics_residual(q, Matrix::Zero(3, 1), J, V, dq, Matrix::Zero(3, 1), Matrix::Zero(3, 1), F, ct)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("CRM-world residual with the generating parameters is at rounding level") {
  const auto params = world_params();
  const auto schedule = drifting_schedule(2000.0);
  const Vector q0 = Vector::Constant(4, 300.0);
  const auto world = synth::generate_crm_world(params, schedule, q0, 0.0, 1);
  const double ct = 1e-5;
  const auto& p = world.panel;
  const crm::CrmInputs in{p.times, p.injection, p.producer_bhp};
  const Matrix dq = testing::exponential_derivative(params, in, q0);
  Matrix J(p.rows(), 4), V(p.rows(), 4);
  J.rowwise() = params.productivity.transpose();
  V.rowwise() = params.pore_volume(ct).transpose();
  Matrix dp(p.rows(), 4);
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    const auto s = std::max<Eigen::Index>(k, 1);
    dp.row(k) = (p.producer_bhp.row(s) - p.producer_bhp.row(s - 1)) / (p.times[s] - p.times[s - 1]);
  }
  const double bound = 1e-8 * p.production.mean();
  const Matrix r = physics_residual(p.production, p.producer_bhp, J, V, dq, dp, p.injection, params.connectivity, ct);
  CHECK(r.cwiseAbs().maxCoeff() < bound);
  CHECK((world.dq_dt - dq).cwiseAbs().maxCoeff() < bound);
  CHECK((world.dp_dt - dp).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("squashing map") {
  CHECK(squash(0.0) == 0.5);
  CHECK(squash(1e6) == 1.0);
  CHECK(squash(-1e6) == 0.0);
  CHECK(squash(std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(squash(-std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(squash(unsquash(0.3)) == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("model shapes, positivity and the balanced F start") {
  const auto world = synth::generate_crm_world(world_params(), drifting_schedule(300.0), Vector::Constant(4, 300.0), 0.0, 1);
  const auto& panel = world.panel;
  const auto split = split_panel(panel.rows());
  auto m = PiGnnModel::create(small_config(GraphMode::SelfLearned), panel, split.train, std::nullopt, 1e-5, 1000);
  CHECK((m.connectivity().array() - 0.5).abs().maxCoeff() < 1e-15);
  const auto pr = m.predict(panel);
  for (const Matrix* x : {&pr.q, &pr.p_wf, &pr.J, &pr.V, &pr.dq_dt, &pr.dp_dt}) {
    CHECK(x->rows() == panel.rows());
    CHECK(x->cols() == 4);
    CHECK(x->allFinite());
  }
  std::mt19937_64 rng(17);
  const TimeSeriesPanel shortp = panel.slice(0, 6);
  bool positive = true;
  for (int draw = 0; draw < 10000; ++draw) {
    m.set_parameters(random_params(m.parameters().size(), rng, draw % 2 ? 3.0 : 0.5));
    const auto d = m.predict(shortp);
    positive = positive && (d.J.array() > 0.0).all() && (d.V.array() > 0.0).all();
  }
  CHECK(positive);
  m.set_parameters(Vector::Zero(m.parameters().size()));
  const auto z = m.predict(panel);
  CHECK(z.q.allFinite());
  CHECK((z.q.rowwise() - z.q.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss term identities") {
  const auto world = synth::generate_crm_world(world_params(), drifting_schedule(300.0), Vector::Constant(4, 300.0), 0.0, 1);
  const auto split = split_panel(world.panel.rows());
  const auto m = PiGnnModel::create(small_config(GraphMode::SelfLearned), world.panel, split.train, std::nullopt, 1e-5, 1001);
  const auto batch = m.make_batch(world.panel, split.train);
  LossConfig base;
  const auto t1 = m.loss_terms(batch, base);
  LossConfig doubled = base;
  doubled.lambda_f = 2.0;
  CHECK(m.loss_terms(batch, doubled).total - t1.total == doctest::Approx(t1.f).epsilon(1e-12));
  LossConfig off = base;
  off.lambda_f = 0.0;
  CHECK(m.loss_terms(batch, off).total == doctest::Approx(t1.q + t1.p).epsilon(1e-14));
  CHECK(t1.total == doctest::Approx(t1.q + t1.p + t1.f).epsilon(1e-14));
}

TEST_CASE("loss gradient including F matches finite differences") {
  const auto world = synth::generate_crm_world(world_params(), drifting_schedule(200.0), Vector::Constant(4, 300.0), 0.0, 1);
  const auto split = split_panel(world.panel.rows());
  Matrix prior = Matrix::Ones(2, 4);
  prior(0, 1) = 0.0;
  for (GraphMode mode : {GraphMode::SelfLearned, GraphMode::Expert}) {
    const auto m = PiGnnModel::create(small_config(mode), world.panel, split.train, prior, 1e-5, 1002);
    const auto batch = m.make_batch(world.panel, split.train);
    const auto r = ad::gradcheck(m.loss_builder(batch, {}), m.shapes(), m.parameters());
    CAPTURE(to_string(mode));
    CHECK(r.max_relative_error < 1e-3);
  }
}

TEST_CASE("permuting producers permutes predictions") {
  const auto world = synth::generate_crm_world(world_params(), drifting_schedule(300.0), Vector::Constant(4, 300.0), 0.0, 1);
  const auto split = split_panel(world.panel.rows());
  const std::vector<int> perm{2, 0, 3, 1};
  TimeSeriesPanel pp = world.panel;
  for (int j = 0; j < 4; ++j) {
    pp.production.col(j) = world.panel.production.col(perm[static_cast<std::size_t>(j)]);
    pp.producer_bhp.col(j) = world.panel.producer_bhp.col(perm[static_cast<std::size_t>(j)]);
    pp.producer_ids[static_cast<std::size_t>(j)] = world.panel.producer_ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])];
  }
  Matrix prior(2, 4), pprior(2, 4);
  prior << 1, 0, 1, 1, 0, 1, 1, 0;
  for (int j = 0; j < 4; ++j) pprior.col(j) = prior.col(perm[static_cast<std::size_t>(j)]);
  for (GraphMode mode : {GraphMode::SelfLearned, GraphMode::Expert}) {
    auto a = PiGnnModel::create(small_config(mode), world.panel, split.train, prior, 1e-5, 1003);
    auto b = PiGnnModel::create(small_config(mode), pp, split.train, pprior, 1e-5, 1003);
    std::mt19937_64 rng(4);
    Vector pa = random_params(a.parameters().size(), rng, 0.7);
    a.set_parameters(pa);
    Vector pb = pa;
    const Eigen::Index f0 = pa.size() - 8;
    for (int j = 0; j < 4; ++j) pb.segment(f0 + 2 * j, 2) = pa.segment(f0 + 2 * perm[static_cast<std::size_t>(j)], 2);
    b.set_parameters(pb);
    const auto qa = a.predict(world.panel).q;
    const auto qb = b.predict(pp).q;
    for (int j = 0; j < 4; ++j) {
      CHECK((qb.col(j) - qa.col(perm[static_cast<std::size_t>(j)])).cwiseAbs().maxCoeff() < 1e-9 * qa.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("checkpoint JSON round trip reproduces predictions") {
  const auto world = synth::generate_crm_world(world_params(), drifting_schedule(300.0), Vector::Constant(4, 300.0), 0.0, 1);
  const auto split = split_panel(world.panel.rows());
  Matrix prior = Matrix::Ones(2, 4);
  auto m = PiGnnModel::create(small_config(GraphMode::Expert), world.panel, split.train, prior, 2e-5, 1004);
  std::mt19937_64 rng(9);
  m.set_parameters(random_params(m.parameters().size(), rng, 0.4));
  const auto back = PiGnnModel::from_json(m.to_json());
  CHECK(back.parameters() == m.parameters());
  CHECK(back.seed() == 1004);
  CHECK(back.total_compressibility() == 2e-5);
  CHECK(back.config().mode == GraphMode::Expert);
  CHECK(back.predict(world.panel).q == m.predict(world.panel).q);
  CHECK(back.graph_adjacency() == prior);
}

TEST_CASE("expert mode needs a prior of the right shape") {
  const auto world = synth::generate_crm_world(world_params(), drifting_schedule(300.0), Vector::Constant(4, 300.0), 0.0, 1);
  const auto split = split_panel(world.panel.rows());
  CHECK_THROWS_AS(PiGnnModel::create(small_config(GraphMode::Expert), world.panel, split.train, std::nullopt, 1e-5, 1), Error);
  CHECK_THROWS_AS(PiGnnModel::create(small_config(GraphMode::Expert), world.panel, split.train, Matrix::Ones(4, 2), 1e-5, 1), Error);
  CHECK_THROWS_AS(graph_mode_from_string("both"), Error);
}

TEST_CASE("ensemble mean") {
  const auto world = synth::generate_crm_world(world_params(), drifting_schedule(300.0), Vector::Constant(4, 300.0), 0.0, 1);
  const auto split = split_panel(world.panel.rows());
  std::vector<PiGnnModel> same(3, PiGnnModel::create(small_config(GraphMode::SelfLearned), world.panel, split.train,
                                                     std::nullopt, 1e-5, 1005));
  const Matrix one = same[0].predict(world.panel).q;
  CHECK((ensemble_predict(same, world.panel) - one).cwiseAbs().maxCoeff() < 1e-12 * one.cwiseAbs().maxCoeff());
  std::vector<PiGnnModel> members;
  for (std::uint64_t s = 1000; s < 1010; ++s) {
    members.push_back(PiGnnModel::create(small_config(GraphMode::SelfLearned), world.panel, split.train, std::nullopt, 1e-5, s));
  }
  const Matrix mean = ensemble_predict(members, world.panel);
  Matrix lo = members[0].predict(world.panel).q, hi = lo, total = Matrix::Zero(lo.rows(), lo.cols());
  for (const auto& m : members) {
    const Matrix q = m.predict(world.panel).q;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
    total += q;
  }
  CHECK(((mean.array() >= lo.array() - 1e-9) && (mean.array() <= hi.array() + 1e-9)).all());
  CHECK((mean - total / 10.0).cwiseAbs().maxCoeff() < 1e-9);
}
