#include "pignn/gnn.hpp"

#include "json.hpp"

#include <cmath>
#include <random>

namespace pignn::gnn {

using nlohmann::json;

namespace {

constexpr double kPositiveFloor = 1e-8;
constexpr int kHeads = 4;  // q, p_wf, J, V

Matrix stack_columns(const Matrix& m) {
  return Eigen::Map<const Matrix>(m.data(), m.size(), 1);
}

Matrix unstack(const Matrix& stacked, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(stacked.data(), rows, cols);
}

// Per-row copy of a per-producer value, stacked producer-major.
Matrix repeat_per_producer(const Vector& per_producer, Eigen::Index rows) {
  Matrix out(rows * per_producer.size(), 1);
  for (Eigen::Index j = 0; j < per_producer.size(); ++j) {
    out.block(j * rows, 0, rows, 1).setConstant(per_producer[j]);
  }
  return out;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols) {
      throw Error("ragged matrix in checkpoint");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json scaler_to_json(const MinMaxScaler& s) {
  return {{"min", vector_to_json(s.min())}, {"max", vector_to_json(s.max())}};
}

MinMaxScaler scaler_from_json(const json& j) {
  return MinMaxScaler::from_state(vector_from_json(j.at("min")), vector_from_json(j.at("max")));
}

}  // namespace

const char* to_string(GraphMode mode) {
  return mode == GraphMode::Expert ? "expert" : "self-learned";
}

GraphMode graph_mode_from_string(const std::string& name) {
  if (name == "expert") return GraphMode::Expert;
  if (name == "self-learned" || name == "self_learned") return GraphMode::SelfLearned;
  throw Error("unknown graph mode '" + name + "'");
}

void LossConfig::validate() const {
  if (!(m >= 1.0)) throw Error("loss norm order m must be at least 1");
  if (lambda_q < 0.0 || lambda_p < 0.0 || lambda_f < 0.0) throw Error("loss weights must be nonnegative");
}

double squash(double raw) {
  return raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw)) : std::exp(raw) / (1.0 + std::exp(raw));
}

double unsquash(double value) {
  const double v = std::clamp(value, 1e-6, 1.0 - 1e-6);
  return std::log(v / (1.0 - v));
}

Matrix physics_residual(const Matrix& q, const Matrix& p_wf, const Matrix& J, const Matrix& V,
                        const Matrix& dq_dt, const Matrix& dp_dt, const Matrix& I,
                        const Matrix& F, double ct) {
  (void)p_wf;
  if ((J.array() < 1e-12).any()) throw Error("productivity index below 1e-12 in physics residual");
  if (I.cols() != F.rows() || F.cols() != q.cols() || I.rows() != q.rows()) {
    throw Error("physics residual shape mismatch");
  }
  const Matrix allocated = I * F;
  return (ct * V.array() / J.array() * dq_dt.array() + q.array() + ct * V.array() * dp_dt.array() -
          allocated.array())
      .matrix();
}

ad::Var normalized_adjacency(ad::Var A) {
  const auto d_inj = ad::rsqrt(ad::nonzero_or_one(ad::row_sum(A)));
  const auto d_prd = ad::rsqrt(ad::nonzero_or_one(ad::col_sum(A)));
  return ad::mul_col(ad::mul_row(A, d_prd), d_inj);
}

ad::Dual gcn_layer(ad::Var W, ad::Var h_injector, const ad::Dual& h_producer, ad::Var a_norm,
                   bool activate) {
  if (h_injector.cols() != a_norm.rows()) throw Error("GCN: injector feature count does not match adjacency");
  const auto nt = h_injector.rows();
  const auto np = a_norm.cols();
  if (h_producer.primal.rows() != nt * np || h_producer.primal.cols() != 1) {
    throw Error("GCN: producer feature must be a stacked column of N_T*N_P rows");
  }
  if (W.rows() != 2) throw Error("GCN: weight matrix must have two rows");
  const auto aggregated = ad::reshape(ad::matmul(h_injector, a_norm), nt * np, 1);
  const auto z = ad::matmul(ad::hconcat(ad::Dual{aggregated, std::nullopt}, h_producer), W);
  return activate ? ad::tanh(z) : z;
}

Matrix gcn_forward(const Matrix& W, const Matrix& h_injector, const Matrix& h_producer,
                   const Matrix& A, bool activate) {
  ad::Tape tape;
  const auto a_norm = normalized_adjacency(tape.constant(A));
  const ad::Dual hp{tape.constant(h_producer), std::nullopt};
  return gcn_layer(tape.constant(W), tape.constant(h_injector), hp, a_norm, activate).primal.value();
}

void PiGnnModel::build_shapes() {
  shapes_.clear();
  const auto g = static_cast<Eigen::Index>(config_.gcn_width);
  const auto hw = static_cast<Eigen::Index>(config_.hidden_width);
  shapes_.push_back({2, g});
  if (config_.use_injector_bhp) shapes_.push_back({2, g});
  const Eigen::Index feat = config_.use_injector_bhp ? 2 * g : g;
  for (int h = 0; h < kHeads; ++h) {
    Eigen::Index in = feat;
    for (int l = 0; l < config_.hidden_layers; ++l) {
      shapes_.push_back({in, hw});
      shapes_.push_back({1, hw});
      in = hw;
    }
    shapes_.push_back({in, 1});
    shapes_.push_back({1, 1});
  }
  shapes_.push_back({num_injectors_, num_producers_});
}

PiGnnModel PiGnnModel::create(const ModelConfig& config, const TimeSeriesPanel& panel,
                              IndexRange train, const std::optional<Matrix>& prior, double ct,
                              std::uint64_t seed) {
  panel.validate();
  if (config.gcn_width < 1 || config.hidden_width < 1 || config.hidden_layers < 0) {
    throw Error("model widths must be positive");
  }
  if (!(ct > 0.0)) throw Error("total compressibility must be positive");
  if (train.size() < 2 || train.end > panel.rows()) throw Error("training range is invalid");
  PiGnnModel m;
  m.config_ = config;
  m.num_injectors_ = panel.num_injectors();
  m.num_producers_ = panel.num_producers();
  m.seed_ = seed;
  m.ct_ = ct;
  if (config.mode == GraphMode::Expert) {
    if (!prior) throw Error("expert graph mode needs a prior adjacency matrix");
    if (prior->rows() != m.num_injectors_ || prior->cols() != m.num_producers_) {
      throw Error("prior adjacency shape does not match the panel");
    }
    m.prior_ = *prior;
  }
  m.time_scaler_ = MinMaxScaler::fit(Matrix(panel.times), train);
  m.injection_scaler_ = MinMaxScaler::fit(panel.injection, train);
  m.injector_bhp_scaler_ = MinMaxScaler::fit(panel.injector_bhp, train);
  m.production_scaler_ = MinMaxScaler::fit(panel.production, train);
  m.producer_bhp_scaler_ = MinMaxScaler::fit(panel.producer_bhp, train);
  m.q_mean_ = std::max(1e-12, panel.production.middleRows(train.begin, train.size()).mean());
  m.j_scale_ = m.q_mean_ / 1000.0;
  m.tau_scale_ = std::max(1e-6, (panel.times[train.end - 1] - panel.times[train.begin]) / 20.0);
  m.build_shapes();

  std::mt19937_64 rng(seed);
  m.params_ = Vector::Zero(ad::flat_size(m.shapes_));
  Eigen::Index offset = 0;
  for (std::size_t s = 0; s + 1 < m.shapes_.size(); ++s) {
    const auto [r, c] = m.shapes_[s];
    if (r > 1) {
      const double limit = std::sqrt(6.0 / static_cast<double>(r + c));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index k = 0; k < r * c; ++k) m.params_[offset + k] = dist(rng);
    }
    offset += r * c;
  }
  m.params_.tail(m.num_injectors_ * m.num_producers_)
      .setConstant(unsquash(1.0 / static_cast<double>(m.num_injectors_)));
  return m;
}

void PiGnnModel::set_parameters(const Vector& params) {
  if (params.size() != params_.size()) throw Error("parameter vector has the wrong length");
  params_ = params;
}

Batch PiGnnModel::make_batch(const TimeSeriesPanel& panel, IndexRange rows) const {
  if (panel.num_injectors() != num_injectors_ || panel.num_producers() != num_producers_) {
    throw Error("panel well counts do not match the model");
  }
  if (rows.empty() || rows.begin < 0 || rows.end > panel.rows()) throw Error("batch row range is invalid");
  const auto nt = rows.size();
  Batch b;
  b.t = time_scaler_.transform(Matrix(panel.times.segment(rows.begin, nt)));
  b.injection = injection_scaler_.transform(panel.injection.middleRows(rows.begin, nt));
  b.injector_bhp = injector_bhp_scaler_.transform(panel.injector_bhp.middleRows(rows.begin, nt));
  b.injection_physical = panel.injection.middleRows(rows.begin, nt);
  b.q = stack_columns(production_scaler_.transform(panel.production.middleRows(rows.begin, nt)));
  b.p_wf = stack_columns(producer_bhp_scaler_.transform(panel.producer_bhp.middleRows(rows.begin, nt)));
  return b;
}

ForwardTape PiGnnModel::forward_on_tape(ad::Tape& tape, std::span<const ad::Var> leaves,
                                        const Batch& batch, bool with_tangents) const {
  if (leaves.size() != shapes_.size()) throw Error("leaf count does not match the model layout");
  const auto nt = batch.rows();
  const auto np = num_producers_;
  std::size_t next = 0;
  const auto w_inj = leaves[next++];
  std::optional<ad::Var> w_bhp;
  if (config_.use_injector_bhp) w_bhp = leaves[next++];

  ForwardTape out;
  out.F = ad::sigmoid(leaves.back());
  const auto A = config_.mode == GraphMode::Expert ? tape.constant(*prior_) : out.F;
  const auto a_norm = normalized_adjacency(A);

  Matrix t_stacked(nt * np, 1);
  for (Eigen::Index j = 0; j < np; ++j) t_stacked.block(j * nt, 0, nt, 1) = batch.t;
  ad::Dual time{tape.constant(t_stacked), std::nullopt};
  if (with_tangents) time.tangent = tape.constant(Matrix::Ones(nt * np, 1));

  auto features = gcn_layer(w_inj, tape.constant(batch.injection), time, a_norm);
  if (w_bhp) features = ad::hconcat(features, gcn_layer(*w_bhp, tape.constant(batch.injector_bhp), time, a_norm));

  auto head = [&](ad::Dual x) {
    for (int l = 0; l < config_.hidden_layers; ++l) {
      const auto w = leaves[next++];
      const auto b = leaves[next++];
      x = ad::tanh(ad::add_row(ad::matmul(x, w), b));
    }
    const auto w = leaves[next++];
    const auto b = leaves[next++];
    return ad::add_row(ad::matmul(x, w), b);
  };
  out.q = head(features);
  out.p_wf = head(features);
  const ad::Dual untimed{features.primal, std::nullopt};
  const double v_scale = j_scale_ * tau_scale_ / ct_;
  out.J = ad::shift(ad::scale(ad::softplus(head(untimed).primal), j_scale_), kPositiveFloor);
  out.V = ad::shift(ad::scale(ad::softplus(head(untimed).primal), v_scale), kPositiveFloor);
  return out;
}

ad::Var PiGnnModel::loss_on_tape(ad::Tape& tape, std::span<const ad::Var> leaves, const Batch& batch,
                                 const LossConfig& loss, LossTerms* terms) const {
  loss.validate();
  const bool physics = loss.lambda_f > 0.0;
  const auto fw = forward_on_tape(tape, leaves, batch, physics);
  const auto lq = ad::mean_pow_abs(ad::sub(fw.q.primal, tape.constant(batch.q)), loss.m);
  const auto lp = ad::mean_pow_abs(ad::sub(fw.p_wf.primal, tape.constant(batch.p_wf)), loss.m);
  auto total = ad::add(ad::scale(lq, loss.lambda_q), ad::scale(lp, loss.lambda_p));
  double lf_value = 0.0;
  if (physics) {
    const auto nt = batch.rows();
    const double rt = time_scaler_.range()[0];
    if (!(rt > 0.0)) throw Error("physics loss needs a nondegenerate time range");
    const Matrix rq = repeat_per_producer(production_scaler_.range(), nt);
    const Matrix mq = repeat_per_producer(production_scaler_.min(), nt);
    const Matrix rp = repeat_per_producer(producer_bhp_scaler_.range(), nt);
    const auto q_phys = ad::add(ad::mul(fw.q.primal, tape.constant(rq)), tape.constant(mq));
    const auto dq = ad::mul(*fw.q.tangent, tape.constant(rq / rt));
    const auto dp = ad::mul(*fw.p_wf.tangent, tape.constant(rp / rt));
    const auto ct_v = ad::scale(fw.V, ct_);
    const auto tau = ad::div(ct_v, fw.J);
    const auto allocated = ad::reshape(ad::matmul(tape.constant(batch.injection_physical), fw.F),
                                       nt * num_producers_, 1);
    const auto residual =
        ad::sub(ad::add(ad::add(ad::mul(tau, dq), q_phys), ad::mul(ct_v, dp)), allocated);
    const auto lf = ad::mean_pow_abs(ad::scale(residual, 1.0 / q_mean_), loss.m);
    lf_value = lf.scalar();
    total = ad::add(total, ad::scale(lf, loss.lambda_f));
  }
  if (terms) *terms = {lq.scalar(), lp.scalar(), lf_value, total.scalar()};
  return total;
}

ad::LossBuilder PiGnnModel::loss_builder(const Batch& batch, const LossConfig& loss) const {
  return [this, batch, loss](ad::Tape& tape, std::span<const ad::Var> leaves) {
    return loss_on_tape(tape, leaves, batch, loss);
  };
}

LossTerms PiGnnModel::loss_terms(const Batch& batch, const LossConfig& loss) const {
  ad::Tape tape;
  const auto leaves = ad::unpack_leaves(tape, shapes_, params_);
  LossTerms terms;
  loss_on_tape(tape, leaves, batch, loss, &terms);
  return terms;
}

ad::GradResult PiGnnModel::loss_and_grad(const Batch& batch, const LossConfig& loss,
                                         LossTerms* terms) const {
  ad::Tape tape;
  const auto leaves = ad::unpack_leaves(tape, shapes_, params_);
  const auto total = loss_on_tape(tape, leaves, batch, loss, terms);
  tape.backward(total);
  return {total.scalar(), ad::pack_grads(leaves)};
}

Predictions PiGnnModel::predict(const TimeSeriesPanel& panel) const {
  return predict(panel, {0, panel.rows()});
}

Predictions PiGnnModel::predict(const TimeSeriesPanel& panel, IndexRange rows) const {
  const auto batch = make_batch(panel, rows);
  const auto nt = batch.rows();
  const auto np = num_producers_;
  Predictions out;
  auto check_range = [&](const Matrix& m, const char* what) {
    if (m.size() && (m.minCoeff() < -0.5 || m.maxCoeff() > 1.5)) {
      out.warnings.push_back(std::string(what) + " lies far outside the training scale");
    }
  };
  check_range(batch.t, "time");
  check_range(batch.injection, "injection rate");
  check_range(batch.injector_bhp, "injector BHP");

  ad::Tape tape;
  std::vector<ad::Var> leaves;
  Eigen::Index offset = 0;
  for (const auto& [r, c] : shapes_) {
    leaves.push_back(tape.constant(Eigen::Map<const Matrix>(params_.data() + offset, r, c)));
    offset += r * c;
  }
  const auto fw = forward_on_tape(tape, leaves, batch, true);
  const double rt = time_scaler_.range()[0];
  const Matrix q_scaled = unstack(fw.q.primal.value(), nt, np);
  const Matrix p_scaled = unstack(fw.p_wf.primal.value(), nt, np);
  out.q = production_scaler_.inverse(q_scaled);
  out.p_wf = producer_bhp_scaler_.inverse(p_scaled);
  out.J = unstack(fw.J.value(), nt, np);
  out.V = unstack(fw.V.value(), nt, np);
  const double inv_rt = rt > 0.0 ? 1.0 / rt : 0.0;
  out.dq_dt = (unstack(fw.q.tangent->value(), nt, np).array().rowwise() *
               production_scaler_.range().transpose().array()) * inv_rt;
  out.dp_dt = (unstack(fw.p_wf.tangent->value(), nt, np).array().rowwise() *
               producer_bhp_scaler_.range().transpose().array()) * inv_rt;
  return out;
}

Matrix PiGnnModel::connectivity() const {
  const Eigen::Map<const Matrix> raw(params_.data() + params_.size() - num_injectors_ * num_producers_,
                                     num_injectors_, num_producers_);
  return raw.unaryExpr([](double v) { return squash(v); });
}

Matrix PiGnnModel::graph_adjacency() const {
  return config_.mode == GraphMode::Expert ? *prior_ : connectivity();
}

std::string PiGnnModel::to_json() const {
  json j;
  j["architecture"] = {{"gcn_width", config_.gcn_width},
                       {"hidden_width", config_.hidden_width},
                       {"hidden_layers", config_.hidden_layers},
                       {"use_injector_bhp", config_.use_injector_bhp},
                       {"graph_mode", to_string(config_.mode)},
                       {"num_injectors", num_injectors_},
                       {"num_producers", num_producers_}};
  j["seed"] = seed_;
  j["ct_per_psi"] = ct_;
  j["residual_scale"] = q_mean_;
  j["j_scale"] = j_scale_;
  j["tau_scale"] = tau_scale_;
  if (prior_) j["prior"] = matrix_to_json(*prior_);
  j["scalers"] = {{"time", scaler_to_json(time_scaler_)},
                  {"injection", scaler_to_json(injection_scaler_)},
                  {"injector_bhp", scaler_to_json(injector_bhp_scaler_)},
                  {"production", scaler_to_json(production_scaler_)},
                  {"producer_bhp", scaler_to_json(producer_bhp_scaler_)}};
  j["parameters"] = vector_to_json(params_);
  j["connectivity_note"] = "learned F is squashed to [0,1] without a row-sum constraint";
  return j.dump();
}

PiGnnModel PiGnnModel::from_json(const std::string& text) {
  const auto j = json::parse(text);
  const auto& a = j.at("architecture");
  PiGnnModel m;
  m.config_.gcn_width = a.at("gcn_width").get<int>();
  m.config_.hidden_width = a.at("hidden_width").get<int>();
  m.config_.hidden_layers = a.at("hidden_layers").get<int>();
  m.config_.use_injector_bhp = a.at("use_injector_bhp").get<bool>();
  m.config_.mode = graph_mode_from_string(a.at("graph_mode").get<std::string>());
  m.num_injectors_ = a.at("num_injectors").get<Eigen::Index>();
  m.num_producers_ = a.at("num_producers").get<Eigen::Index>();
  m.seed_ = j.at("seed").get<std::uint64_t>();
  m.ct_ = j.at("ct_per_psi").get<double>();
  m.q_mean_ = j.at("residual_scale").get<double>();
  m.j_scale_ = j.at("j_scale").get<double>();
  m.tau_scale_ = j.at("tau_scale").get<double>();
  if (j.contains("prior")) m.prior_ = matrix_from_json(j.at("prior"));
  if (m.config_.mode == GraphMode::Expert && !m.prior_) throw Error("expert checkpoint lacks its prior");
  const auto& s = j.at("scalers");
  m.time_scaler_ = scaler_from_json(s.at("time"));
  m.injection_scaler_ = scaler_from_json(s.at("injection"));
  m.injector_bhp_scaler_ = scaler_from_json(s.at("injector_bhp"));
  m.production_scaler_ = scaler_from_json(s.at("production"));
  m.producer_bhp_scaler_ = scaler_from_json(s.at("producer_bhp"));
  m.build_shapes();
  m.params_ = vector_from_json(j.at("parameters"));
  if (m.params_.size() != ad::flat_size(m.shapes_)) throw Error("checkpoint parameter count does not match its architecture");
  return m;
}

Matrix ensemble_predict(std::span<const PiGnnModel> members, const TimeSeriesPanel& panel) {
  if (members.empty()) throw Error("ensemble needs at least one model");
  Matrix mean = members.front().predict(panel).q;
  for (std::size_t k = 1; k < members.size(); ++k) mean += members[k].predict(panel).q;
  return mean / static_cast<double>(members.size());
}

}  // namespace pignn::gnn
