#pragma once

// Graph network over an injector -> producer bipartite graph.
//
// One GCN block projects, per producer and timestep, the degree-normalized
// injector aggregate together with the producer time feature. Four parallel
// MLP heads read the GCN features and emit q, p_wf, J(t) and V_p(t). Rows of
// every per-producer quantity are stacked producer-major: row j * N_T + t.

#include "pignn/autodiff.hpp"
#include "pignn/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pignn::gnn {

enum class GraphMode { Expert, SelfLearned };

const char* to_string(GraphMode mode);
GraphMode graph_mode_from_string(const std::string& name);

struct ModelConfig {
  int gcn_width = 16;
  int hidden_width = 32;
  int hidden_layers = 2;
  bool use_injector_bhp = true;
  GraphMode mode = GraphMode::SelfLearned;
};

struct LossConfig {
  double m = 2.0;
  double lambda_q = 1.0;
  double lambda_p = 1.0;
  double lambda_f = 1.0;

  void validate() const;
};

struct LossTerms {
  double q = 0.0;
  double p = 0.0;
  double f = 0.0;
  double total = 0.0;
};

/// Plain evaluation of the material-balance residual in physical units:
/// (C_t V / J) dq/dt + q + C_t V dp/dt - (I F)_j. All matrices are
/// [N_T x N_P] except I [N_T x N_I] and F [N_I x N_P].
Matrix physics_residual(const Matrix& q, const Matrix& p_wf, const Matrix& J, const Matrix& V,
                        const Matrix& dq_dt, const Matrix& dp_dt, const Matrix& I,
                        const Matrix& F, double total_compressibility);

/// D_I^{-1/2} A D_P^{-1/2} with zero degrees replaced by one.
ad::Var normalized_adjacency(ad::Var A);

/// Per-producer GCN projection. `h_injector` is [N_T x N_I], `h_producer` is
/// the stacked producer feature [N_T*N_P x 1], `W` is [2 x d_out]. Returns
/// [N_T*N_P x d_out].
ad::Dual gcn_layer(ad::Var W, ad::Var h_injector, const ad::Dual& h_producer, ad::Var a_norm,
                   bool activate = true);

/// Convenience wrapper over gcn_layer on plain matrices (no tangent).
Matrix gcn_forward(const Matrix& W, const Matrix& h_injector, const Matrix& h_producer,
                   const Matrix& A, bool activate = true);

/// Inputs and targets for one contiguous block of rows, already scaled by
/// the model's scalers.
struct Batch {
  Matrix t;            // [N_T x 1] scaled time
  Matrix injection;    // [N_T x N_I] scaled
  Matrix injector_bhp; // [N_T x N_I] scaled
  Matrix injection_physical;
  Matrix q;            // [N_T*N_P x 1] scaled targets (stacked)
  Matrix p_wf;         // [N_T*N_P x 1] scaled targets (stacked)
  Eigen::Index rows() const { return t.rows(); }
};

struct ForwardTape {
  ad::Dual q;      // scaled, stacked
  ad::Dual p_wf;   // scaled, stacked
  ad::Var J;       // physical, stacked
  ad::Var V;       // physical, stacked
  ad::Var F;       // squashed [N_I x N_P]
};

struct Predictions {
  Matrix q;      // physical [N_T x N_P]
  Matrix p_wf;
  Matrix J;
  Matrix V;
  Matrix dq_dt;  // physical, per day
  Matrix dp_dt;
  std::vector<std::string> warnings;
};

class PiGnnModel {
 public:
  PiGnnModel() = default;

  /// Fits scalers on the training rows and initializes parameters from
  /// `seed`. `prior` is required in expert mode.
  static PiGnnModel create(const ModelConfig& config, const TimeSeriesPanel& panel,
                           IndexRange train, const std::optional<Matrix>& prior,
                           double total_compressibility, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<ad::Shape>& shapes() const { return shapes_; }
  const Vector& parameters() const { return params_; }
  void set_parameters(const Vector& params);
  Eigen::Index num_injectors() const { return num_injectors_; }
  Eigen::Index num_producers() const { return num_producers_; }
  std::uint64_t seed() const { return seed_; }
  double total_compressibility() const { return ct_; }
  double residual_scale() const { return q_mean_; }
  const std::optional<Matrix>& prior() const { return prior_; }

  const MinMaxScaler& time_scaler() const { return time_scaler_; }
  const MinMaxScaler& injection_scaler() const { return injection_scaler_; }
  const MinMaxScaler& injector_bhp_scaler() const { return injector_bhp_scaler_; }
  const MinMaxScaler& production_scaler() const { return production_scaler_; }
  const MinMaxScaler& producer_bhp_scaler() const { return producer_bhp_scaler_; }

  Batch make_batch(const TimeSeriesPanel& panel, IndexRange rows) const;

  /// Records the forward pass for `leaves` laid out as shapes().
  ForwardTape forward_on_tape(ad::Tape& tape, std::span<const ad::Var> leaves, const Batch& batch,
                              bool with_tangents) const;

  /// Scaled supervised terms then the physics term on the tape.
  ad::Var loss_on_tape(ad::Tape& tape, std::span<const ad::Var> leaves, const Batch& batch,
                       const LossConfig& loss, LossTerms* terms = nullptr) const;

  ad::LossBuilder loss_builder(const Batch& batch, const LossConfig& loss) const;

  LossTerms loss_terms(const Batch& batch, const LossConfig& loss) const;
  /// Loss value and gradient at the current parameters.
  ad::GradResult loss_and_grad(const Batch& batch, const LossConfig& loss,
                               LossTerms* terms = nullptr) const;

  Predictions predict(const TimeSeriesPanel& panel) const;
  Predictions predict(const TimeSeriesPanel& panel, IndexRange rows) const;

  /// Squashed trainable connectivity.
  Matrix connectivity() const;
  /// Adjacency driving the GCN: the prior in expert mode, squashed F otherwise.
  Matrix graph_adjacency() const;

  std::string to_json() const;
  static PiGnnModel from_json(const std::string& text);

 private:
  void build_shapes();

  ModelConfig config_;
  std::vector<ad::Shape> shapes_;
  Vector params_;
  Eigen::Index num_injectors_ = 0;
  Eigen::Index num_producers_ = 0;
  std::uint64_t seed_ = 0;
  double ct_ = 1e-5;
  double q_mean_ = 1.0;
  double j_scale_ = 1.0;
  double tau_scale_ = 1.0;
  std::optional<Matrix> prior_;
  MinMaxScaler time_scaler_;
  MinMaxScaler injection_scaler_;
  MinMaxScaler injector_bhp_scaler_;
  MinMaxScaler production_scaler_;
  MinMaxScaler producer_bhp_scaler_;
};

/// Logistic squashing of raw connectivity parameters.
double squash(double raw);
double unsquash(double value);

/// Arithmetic mean of physical q predictions over `members`.
Matrix ensemble_predict(std::span<const PiGnnModel> members, const TimeSeriesPanel& panel);

}  // namespace pignn::gnn
