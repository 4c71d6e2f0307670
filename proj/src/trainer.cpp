#include "pignn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace pignn::train {

std::vector<std::uint64_t> TrainConfig::default_seeds() {
  std::vector<std::uint64_t> seeds(10);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = 1000 + i;
  return seeds;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (!(clip_norm > 0.0)) throw Error("clip norm must be positive");
  if (patience < 1) throw Error("patience must be at least 1");
  if (max_epochs < 0) throw Error("max epochs must be nonnegative");
  if (min_epochs < 0) throw Error("min epochs must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw Error("Adam betas must lie in [0, 1)");
  if (seeds.empty()) throw Error("at least one seed is required");
}

double clip_global_norm(Vector& g, double max_norm) {
  const double norm = g.norm();
  if (norm > max_norm) g *= max_norm / norm;
  return norm;
}

Adam::Adam(Eigen::Index size, const TrainConfig& c)
    : lr_(c.learning_rate), b1_(c.beta1), b2_(c.beta2), eps_(c.epsilon),
      m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainResult train(gnn::PiGnnModel model, const TimeSeriesPanel& panel, const DataSplit& split,
                  const TrainConfig& config, const gnn::LossConfig& loss,
                  const EpochCallback& on_epoch) {
  config.validate();
  loss.validate();
  const auto train_batch = model.make_batch(panel, split.train);
  const auto val_batch = model.make_batch(panel, split.validation);
  gnn::LossConfig supervised = loss;
  supervised.lambda_f = 0.0;
  supervised.lambda_q = 1.0;
  supervised.lambda_p = 1.0;

  TrainResult result;
  Vector params = model.parameters();
  Vector best = params;
  Adam adam(params.size(), config);
  History& h = result.history;
  h.best_validation = std::numeric_limits<double>::infinity();
  for (int epoch = 0;; ++epoch) {
    model.set_parameters(params);
    auto g = model.loss_and_grad(train_batch, loss);
    const double val = model.loss_terms(val_batch, supervised).total;
    if (!std::isfinite(g.value) || !std::isfinite(val) || !g.gradient.allFinite()) {
      throw Error("non-finite loss at epoch " + std::to_string(epoch));
    }
    h.train_loss.push_back(g.value);
    h.validation_loss.push_back(val);
    if (on_epoch) on_epoch(epoch, g.value, val);
    if (val < h.best_validation) {
      h.best_validation = val;
      h.best_epoch = epoch;
      best = params;
    }
    if (epoch >= config.max_epochs) break;
    if (epoch >= config.min_epochs && epoch - h.best_epoch >= config.patience) {
      h.stopped_early = true;
      break;
    }
    clip_global_norm(g.gradient, config.clip_norm);
    adam.step(params, g.gradient);
  }
  model.set_parameters(best);
  result.model = std::move(model);
  return result;
}

EnsembleResult train_ensemble(const gnn::ModelConfig& model_config, const TimeSeriesPanel& panel,
                              const DataSplit& split, const std::optional<Matrix>& prior,
                              double ct, const TrainConfig& config, const gnn::LossConfig& loss,
                              int threads) {
  if (config.seeds.empty()) throw Error("ensemble needs at least one seed");
  const auto n = config.seeds.size();
  std::vector<TrainResult> members(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        auto model = gnn::PiGnnModel::create(model_config, panel, split.train, prior, ct, config.seeds[k]);
        members[k] = train(std::move(model), panel, split, config, loss);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(n)));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  EnsembleResult out;
  std::vector<gnn::PiGnnModel> models;
  for (const auto& m : members) models.push_back(m.model);
  out.mean_q = gnn::ensemble_predict(models, panel);
  out.mean_connectivity = Matrix::Zero(panel.num_injectors(), panel.num_producers());
  for (const auto& m : models) out.mean_connectivity += m.connectivity();
  out.mean_connectivity /= static_cast<double>(models.size());
  out.members = std::move(members);
  return out;
}

}  // namespace pignn::train
