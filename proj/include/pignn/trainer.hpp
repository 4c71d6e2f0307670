#pragma once

// Full-batch Adam with global-norm clipping and early stopping on the
// supervised validation loss.

#include "pignn/gnn.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace pignn::train {

struct TrainConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  int max_epochs = 5000;
  int patience = 200;
  int min_epochs = 500;  // early stopping is not considered before this epoch
  std::vector<std::uint64_t> seeds = default_seeds();

  static std::vector<std::uint64_t> default_seeds();
  void validate() const;
};

struct History {
  std::vector<double> train_loss;       // total loss at the start of each epoch
  std::vector<double> validation_loss;  // supervised terms on validation rows
  int best_epoch = 0;
  double best_validation = 0.0;
  bool stopped_early = false;
};

struct TrainResult {
  gnn::PiGnnModel model;  // snapshot at best_epoch
  History history;
};

/// Rescales `g` in place to norm `max_norm` when its Euclidean norm exceeds
/// it. Returns the norm before clipping.
double clip_global_norm(Vector& g, double max_norm);

class Adam {
 public:
  Adam(Eigen::Index size, const TrainConfig& config);
  void step(Vector& params, const Vector& grad);
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double validation_loss)>;

/// Epoch 0 evaluates the initial parameters; each later epoch follows one
/// clipped Adam update. Returns the minimum-validation snapshot.
TrainResult train(gnn::PiGnnModel model, const TimeSeriesPanel& panel, const DataSplit& split,
                  const TrainConfig& config, const gnn::LossConfig& loss,
                  const EpochCallback& on_epoch = {});

struct EnsembleResult {
  std::vector<TrainResult> members;
  Matrix mean_q;             // [N_T x N_P] over the full panel
  Matrix mean_connectivity;  // [N_I x N_P]
};

/// One model per seed in config.seeds, all sharing architecture and scalers.
EnsembleResult train_ensemble(const gnn::ModelConfig& model_config, const TimeSeriesPanel& panel,
                              const DataSplit& split, const std::optional<Matrix>& prior,
                              double total_compressibility, const TrainConfig& config,
                              const gnn::LossConfig& loss, int threads = 1);

}  // namespace pignn::train
