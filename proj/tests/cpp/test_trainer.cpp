#include "pignn/synth.hpp"
#include "pignn/trainer.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>

using namespace pignn;
using namespace pignn::train;

namespace {

synth::CrmWorld small_world(double horizon = 490.0) {
  crm::CrmParams p;
  p.tau.resize(4);
  p.tau << 30.0, 60.0, 45.0, 80.0;
  p.productivity.resize(4);
  p.productivity << 0.5, 0.8, 0.3, 1.0;
  p.connectivity.resize(2, 4);
  p.connectivity << 0.4, 0.1, 0.3, 0.15, 0.05, 0.5, 0.2, 0.2;
  return synth::generate_crm_world(p, synth::default_schedule(horizon, 10.0), Vector::Constant(4, 300.0), 0.0, 1);
}

gnn::ModelConfig small_model() {
  gnn::ModelConfig c;
  c.gcn_width = 6;
  c.hidden_width = 8;
  return c;
}

}  // namespace

TEST_CASE("clipping rescales a norm-5 gradient to norm 1") {
  Vector g(2);
  g << 3.0, 4.0;
  CHECK(clip_global_norm(g, 1.0) == 5.0);
  CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g[0] == doctest::Approx(0.6));
  Vector small(3);
  small << 0.1, -0.2, 0.3;
  const Vector before = small;
  clip_global_norm(small, 1.0);
  CHECK(small == before);
}

TEST_CASE("Adam first step moves each coordinate by the learning rate") {
  TrainConfig c;
  c.learning_rate = 0.01;
  Adam adam(3, c);
  Vector p = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 1e-3;
  adam.step(p, g);
  CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(adam.steps() == 1);
}

TEST_CASE("default ensemble uses ten seeds from 1000") {
  const auto s = TrainConfig{}.seeds;
  REQUIRE(s.size() == 10);
  for (std::size_t k = 0; k < s.size(); ++k) CHECK(s[k] == 1000 + k);
}

TEST_CASE("zero epochs returns the initial parameters") {
  const auto world = small_world();
  const auto split = split_panel(world.panel.rows());
  const auto m = gnn::PiGnnModel::create(small_model(), world.panel, split.train, std::nullopt, 1e-5, 1000);
  TrainConfig c;
  c.max_epochs = 0;
  const auto r = train::train(m, world.panel, split, c, {});
  CHECK(r.model.parameters() == m.parameters());
  CHECK(r.history.best_epoch == 0);
}

TEST_CASE("early stopping keeps the minimum validation snapshot") {
  const auto world = small_world();
  const auto split = split_panel(world.panel.rows());
  const auto m = gnn::PiGnnModel::create(small_model(), world.panel, split.train, std::nullopt, 1e-5, 1001);
  TrainConfig c;
  c.learning_rate = 5e-2;
  c.max_epochs = 400;
  c.patience = 15;
  c.min_epochs = 0;
  const auto r = train::train(m, world.panel, split, c, {});
  const auto& v = r.history.validation_loss;
  REQUIRE(!v.empty());
  const double best = *std::min_element(v.begin(), v.end());
  CHECK(r.history.best_validation == best);
  CHECK(v[static_cast<std::size_t>(r.history.best_epoch)] == best);
  for (double x : v) CHECK(r.history.best_validation <= x);
  gnn::LossConfig supervised;
  supervised.lambda_f = 0.0;
  const auto again = r.model.loss_terms(r.model.make_batch(world.panel, split.validation), supervised);
  CHECK(again.total == doctest::Approx(best).epsilon(1e-12));
  if (r.history.stopped_early) {
    CHECK(static_cast<int>(v.size()) - 1 - r.history.best_epoch == c.patience);
  }
}

TEST_CASE("early stopping waits for the minimum epoch count") {
  const auto world = small_world();
  const auto split = split_panel(world.panel.rows());
  const auto m = gnn::PiGnnModel::create(small_model(), world.panel, split.train, std::nullopt, 1e-5, 1001);
  TrainConfig c;
  c.learning_rate = 5e-2;
  c.max_epochs = 400;
  c.patience = 1;
  c.min_epochs = 120;
  const auto r = train::train(m, world.panel, split, c, {});
  CHECK(r.history.validation_loss.size() >= 121);
  if (r.history.stopped_early) {
    CHECK(static_cast<int>(r.history.validation_loss.size()) - 1 - r.history.best_epoch >= c.patience);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto world = small_world();
  const auto split = split_panel(world.panel.rows());
  TrainConfig c;
  c.max_epochs = 50;
  const auto m = gnn::PiGnnModel::create(small_model(), world.panel, split.train, std::nullopt, 1e-5, 1002);
  const auto a = train::train(m, world.panel, split, c, {});
  const auto b = train::train(m, world.panel, split, c, {});
  CHECK(a.history.train_loss == b.history.train_loss);
  CHECK(a.history.validation_loss == b.history.validation_loss);
  CHECK(a.model.parameters() == b.model.parameters());
}

TEST_CASE("CRM-world training loss drops below a tenth of its start") {
  const auto world = small_world();
  const auto split = split_panel(world.panel.rows());
  const auto m = gnn::PiGnnModel::create(gnn::ModelConfig{}, world.panel, split.train, std::nullopt, 1e-5, 1000);
  TrainConfig c;
  c.max_epochs = 2000;
  c.patience = 2000;
  const auto r = train::train(m, world.panel, split, c, {});
  const auto& h = r.history.train_loss;
  CHECK(*std::min_element(h.begin(), h.end()) < 0.1 * h.front());
  CHECK(h.back() < 0.1 * h.front());
}

TEST_CASE("ensemble averages its members") {
  const auto world = small_world();
  const auto split = split_panel(world.panel.rows());
  TrainConfig c;
  c.max_epochs = 3;
  const auto e = train_ensemble(small_model(), world.panel, split, std::nullopt, 1e-5, c, {}, 2);
  REQUIRE(e.members.size() == 10);
  Matrix total = Matrix::Zero(e.mean_q.rows(), e.mean_q.cols());
  Matrix f = Matrix::Zero(2, 4);
  for (const auto& m : e.members) {
    total += m.model.predict(world.panel).q;
    f += m.model.connectivity();
  }
  CHECK((e.mean_q - total / 10.0).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((e.mean_connectivity - f / 10.0).cwiseAbs().maxCoeff() < 1e-15);
  for (std::size_t k = 0; k < 10; ++k) CHECK(e.members[k].model.seed() == 1000 + k);
  const auto single = train_ensemble(small_model(), world.panel, split, std::nullopt, 1e-5, c, {}, 1);
  CHECK(single.mean_q == e.mean_q);
}

TEST_CASE("invalid training configs are rejected") {
  TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.clip_norm = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.min_epochs = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}
