#include "pignn/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace pignn::ad {

namespace {

Matrix sigmoid_of(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Matrix tanh_of(const Matrix& x) {
  const Eigen::ArrayXXd e = (2.0 * x.array().max(-20.0).min(20.0)).exp();
  return 1.0 - 2.0 / (e + 1.0);
}

Matrix softplus_of(const Matrix& x) {
  return x.unaryExpr([](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
}

void require_same(Var a, Var b, const char* what) {
  if (a.tape != b.tape) throw Error(std::string(what) + ": operands live on different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
  }
}

Var unary(Op op, Var a, Matrix value, double scalar = 0.0) {
  return a.tape->record(op, a.id, -1, scalar, std::move(value));
}

Var binary(Op op, Var a, Var b, Matrix value) {
  return a.tape->record(op, a.id, b.id, 0.0, std::move(value));
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
    case Op::MatMul: return "matmul";
    case Op::AddRow: return "add_row";
    case Op::MulCol: return "mul_col";
    case Op::MulRow: return "mul_row";
    case Op::Tanh: return "tanh";
    case Op::TanhTangent: return "tanh_tangent";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Rsqrt: return "rsqrt";
    case Op::Relu: return "relu";
    case Op::Abs: return "abs";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::MeanPowAbs: return "mean_pow_abs";
    case Op::ColSum: return "col_sum";
    case Op::RowSum: return "row_sum";
    case Op::HConcat: return "hconcat";
    case Op::Reshape: return "reshape";
    case Op::NonzeroOrOne: return "nonzero_or_one";
    case Op::RowBlock: return "row_block";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape->value(id); }
Matrix Var::grad() const { return tape->grad(id); }

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw Error("scalar() on a non-scalar node");
  return v(0, 0);
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  if (!value.allFinite()) throw NonFiniteError("non-finite leaf value");
  Node n;
  n.op = Op::Leaf;
  n.needs_grad = requires_grad;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(Op op, int a, int b, double scalar, Matrix value) {
  if (!value.allFinite()) {
    throw NonFiniteError(std::string("non-finite value produced by ") + op_name(op) + " (node " +
                         std::to_string(nodes_.size()) + ")");
  }
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.scalar = scalar;
  n.needs_grad = (a >= 0 && nodes_[static_cast<std::size_t>(a)].needs_grad) ||
                 (b >= 0 && nodes_[static_cast<std::size_t>(b)].needs_grad);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Matrix Tape::grad(int id) const {
  const auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var out) {
  if (out.tape != this) throw Error("backward on a node from another tape");
  if (out.value().size() != 1) throw Error("backward needs a scalar output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(out.id)].grad = Matrix::Ones(1, 1);
  for (int id = out.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0 || n.op == Op::Leaf) continue;
    const Matrix& g = n.grad;
    const int a = n.a;
    const int b = n.b;
    const double s = n.scalar;
    const Matrix& y = n.value;
    const Matrix& va = value(a);
    switch (n.op) {
      case Op::Leaf: break;
      case Op::Add:
        accumulate(a, g);
        accumulate(b, g);
        break;
      case Op::Sub:
        accumulate(a, g);
        accumulate(b, -g);
        break;
      case Op::Mul:
        accumulate(a, g.cwiseProduct(value(b)));
        accumulate(b, g.cwiseProduct(va));
        break;
      case Op::Div: {
        const Matrix& vb = value(b);
        accumulate(a, g.cwiseQuotient(vb));
        accumulate(b, -g.cwiseProduct(y).cwiseQuotient(vb));
        break;
      }
      case Op::Scale: accumulate(a, s * g); break;
      case Op::Shift: accumulate(a, g); break;
      case Op::MatMul:
        if (requires_grad(a)) accumulate(a, g * value(b).transpose());
        if (requires_grad(b)) accumulate(b, va.transpose() * g);
        break;
      case Op::AddRow:
        accumulate(a, g);
        if (requires_grad(b)) accumulate(b, g.colwise().sum());
        break;
      case Op::MulCol: {
        const Matrix& col = value(b);
        if (requires_grad(a)) accumulate(a, g.array().colwise() * col.col(0).array());
        if (requires_grad(b)) accumulate(b, g.cwiseProduct(va).rowwise().sum());
        break;
      }
      case Op::MulRow: {
        const Matrix& row = value(b);
        if (requires_grad(a)) accumulate(a, g.array().rowwise() * row.row(0).array());
        if (requires_grad(b)) accumulate(b, g.cwiseProduct(va).colwise().sum());
        break;
      }
      case Op::Tanh:
        accumulate(a, g.array() * (1.0 - y.array().square()));
        break;
      case Op::TanhTangent: {
        // y_out = (1 - t^2) u with t = value(a), u = value(b)
        const Matrix& u = value(b);
        if (requires_grad(a)) accumulate(a, -2.0 * g.array() * va.array() * u.array());
        if (requires_grad(b)) accumulate(b, g.array() * (1.0 - va.array().square()));
        break;
      }
      case Op::Sigmoid:
        accumulate(a, g.array() * y.array() * (1.0 - y.array()));
        break;
      case Op::Softplus:
        accumulate(a, g.cwiseProduct(sigmoid_of(va)));
        break;
      case Op::Exp: accumulate(a, g.cwiseProduct(y)); break;
      case Op::Log: accumulate(a, g.cwiseQuotient(va)); break;
      case Op::Square: accumulate(a, 2.0 * g.cwiseProduct(va)); break;
      case Op::Rsqrt:
        accumulate(a, -0.5 * g.array() * y.array().cube());
        break;
      case Op::Relu:
        accumulate(a, g.array() * (va.array() > 0.0).cast<double>());
        break;
      case Op::Abs:
        accumulate(a, g.array() * va.array().sign());
        break;
      case Op::Sum: accumulate(a, Matrix::Constant(va.rows(), va.cols(), g(0, 0))); break;
      case Op::Mean:
        accumulate(a, Matrix::Constant(va.rows(), va.cols(), g(0, 0) / static_cast<double>(va.size())));
        break;
      case Op::MeanPowAbs: {
        const double c = g(0, 0) * s / static_cast<double>(va.size());
        if (s == 2.0) {
          accumulate(a, c * va);
        } else {
          accumulate(a, c * (va.array().sign() * va.array().abs().pow(s - 1.0)).matrix());
        }
        break;
      }
      case Op::ColSum: accumulate(a, g.replicate(va.rows(), 1)); break;
      case Op::RowSum: accumulate(a, g.replicate(1, va.cols())); break;
      case Op::HConcat: {
        const auto ca = va.cols();
        if (requires_grad(a)) accumulate(a, g.leftCols(ca));
        if (requires_grad(b)) accumulate(b, g.rightCols(g.cols() - ca));
        break;
      }
      case Op::Reshape:
        accumulate(a, Eigen::Map<const Matrix>(g.data(), va.rows(), va.cols()));
        break;
      case Op::NonzeroOrOne:
        accumulate(a, g.array() * (va.array() != 0.0).cast<double>());
        break;
      case Op::RowBlock: {
        Matrix full = Matrix::Zero(va.rows(), va.cols());
        full.middleRows(static_cast<Eigen::Index>(s), g.rows()) = g;
        accumulate(a, full);
        break;
      }
    }
  }
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  return binary(Op::Add, a, b, a.value() + b.value());
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  return binary(Op::Sub, a, b, a.value() - b.value());
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  return binary(Op::Mul, a, b, a.value().cwiseProduct(b.value()));
}

Var div(Var a, Var b) {
  require_same(a, b, "div");
  return binary(Op::Div, a, b, a.value().cwiseQuotient(b.value()));
}

Var scale(Var a, double s) { return unary(Op::Scale, a, s * a.value(), s); }

Var shift(Var a, double s) { return unary(Op::Shift, a, a.value().array() + s, s); }

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw Error("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                std::to_string(b.rows()) + " differ");
  }
  return binary(Op::MatMul, a, b, a.value() * b.value());
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw Error("add_row: row shape mismatch");
  return binary(Op::AddRow, x, row, x.value().rowwise() + row.value().row(0));
}

Var mul_col(Var x, Var col) {
  if (col.cols() != 1 || col.rows() != x.rows()) throw Error("mul_col: column shape mismatch");
  return binary(Op::MulCol, x, col, x.value().array().colwise() * col.value().col(0).array());
}

Var mul_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw Error("mul_row: row shape mismatch");
  return binary(Op::MulRow, x, row, x.value().array().rowwise() * row.value().row(0).array());
}

Var tanh(Var a) { return unary(Op::Tanh, a, tanh_of(a.value())); }

Var tanh_tangent(Var y, Var u) {
  require_same(y, u, "tanh_tangent");
  return binary(Op::TanhTangent, y, u, (1.0 - y.value().array().square()) * u.value().array());
}

Var sigmoid(Var a) { return unary(Op::Sigmoid, a, sigmoid_of(a.value())); }
Var softplus(Var a) { return unary(Op::Softplus, a, softplus_of(a.value())); }
Var exp(Var a) { return unary(Op::Exp, a, a.value().array().exp()); }

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw NonFiniteError("log of a nonpositive value");
  return unary(Op::Log, a, a.value().array().log());
}

Var square(Var a) { return unary(Op::Square, a, a.value().array().square()); }

Var rsqrt(Var a) {
  if ((a.value().array() <= 0.0).any()) throw NonFiniteError("rsqrt of a nonpositive value");
  return unary(Op::Rsqrt, a, a.value().array().rsqrt());
}

Var relu(Var a) { return unary(Op::Relu, a, a.value().cwiseMax(0.0)); }
Var abs(Var a) { return unary(Op::Abs, a, a.value().cwiseAbs()); }
Var sum(Var a) { return unary(Op::Sum, a, Matrix::Constant(1, 1, a.value().sum())); }
Var mean(Var a) { return unary(Op::Mean, a, Matrix::Constant(1, 1, a.value().mean())); }

Var mean_pow_abs(Var a, double m) {
  if (!(m >= 1.0)) throw Error("mean_pow_abs: order must be at least 1");
  const double v = m == 2.0 ? a.value().array().square().mean() : a.value().array().abs().pow(m).mean();
  return unary(Op::MeanPowAbs, a, Matrix::Constant(1, 1, v), m);
}

Var col_sum(Var a) { return unary(Op::ColSum, a, a.value().colwise().sum()); }
Var row_sum(Var a) { return unary(Op::RowSum, a, a.value().rowwise().sum()); }

Var hconcat(Var a, Var b) {
  if (a.rows() != b.rows()) throw Error("hconcat: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  return binary(Op::HConcat, a, b, std::move(v));
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw Error("reshape: element count changes");
  return unary(Op::Reshape, a, Eigen::Map<const Matrix>(a.value().data(), rows, cols));
}

Var nonzero_or_one(Var a) {
  return unary(Op::NonzeroOrOne, a, a.value().unaryExpr([](double v) { return v == 0.0 ? 1.0 : v; }));
}

Var row_block(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw Error("row_block: range out of bounds");
  return unary(Op::RowBlock, a, a.value().middleRows(begin, count), static_cast<double>(begin));
}

namespace {

std::optional<Var> add_opt(const std::optional<Var>& a, const std::optional<Var>& b) {
  if (a && b) return add(*a, *b);
  return a ? a : b;
}

}  // namespace

Dual add(const Dual& a, const Dual& b) { return {add(a.primal, b.primal), add_opt(a.tangent, b.tangent)}; }

Dual scale(const Dual& a, double s) {
  Dual out{scale(a.primal, s), std::nullopt};
  if (a.tangent) out.tangent = scale(*a.tangent, s);
  return out;
}

Dual matmul(const Dual& a, Var w) {
  Dual out{matmul(a.primal, w), std::nullopt};
  if (a.tangent) out.tangent = matmul(*a.tangent, w);
  return out;
}

Dual add_row(const Dual& x, Var row) { return {add_row(x.primal, row), x.tangent}; }

Dual hconcat(const Dual& a, const Dual& b) {
  Dual out{hconcat(a.primal, b.primal), std::nullopt};
  if (a.tangent || b.tangent) {
    Tape& tape = *a.primal.tape;
    const Var ta = a.tangent ? *a.tangent : tape.constant(Matrix::Zero(a.primal.rows(), a.primal.cols()));
    const Var tb = b.tangent ? *b.tangent : tape.constant(Matrix::Zero(b.primal.rows(), b.primal.cols()));
    out.tangent = hconcat(ta, tb);
  }
  return out;
}

Dual tanh(const Dual& a) {
  Dual out{tanh(a.primal), std::nullopt};
  if (a.tangent) out.tangent = tanh_tangent(out.primal, *a.tangent);
  return out;
}

Dual softplus(const Dual& a) {
  Dual out{softplus(a.primal), std::nullopt};
  if (a.tangent) out.tangent = mul(sigmoid(a.primal), *a.tangent);
  return out;
}

Dual mul(const Dual& a, const Dual& b) {
  Dual out{mul(a.primal, b.primal), std::nullopt};
  std::optional<Var> left;
  std::optional<Var> right;
  if (a.tangent) left = mul(*a.tangent, b.primal);
  if (b.tangent) right = mul(a.primal, *b.tangent);
  out.tangent = add_opt(left, right);
  return out;
}

Dual relu(const Dual& a) {
  if (a.tangent) throw Error("relu is not smooth and cannot carry a time tangent");
  return {relu(a.primal), std::nullopt};
}

Eigen::Index flat_size(std::span<const Shape> shapes) {
  Eigen::Index n = 0;
  for (const auto& [r, c] : shapes) n += r * c;
  return n;
}

std::vector<Var> unpack_leaves(Tape& tape, std::span<const Shape> shapes, const Vector& flat) {
  if (flat.size() != flat_size(shapes)) throw Error("parameter vector length does not match shapes");
  std::vector<Var> leaves;
  leaves.reserve(shapes.size());
  Eigen::Index offset = 0;
  for (const auto& [r, c] : shapes) {
    leaves.push_back(tape.leaf(Eigen::Map<const Matrix>(flat.data() + offset, r, c)));
    offset += r * c;
  }
  return leaves;
}

Vector pack_grads(std::span<const Var> leaves) {
  Eigen::Index n = 0;
  for (const auto& v : leaves) n += v.value().size();
  Vector out(n);
  Eigen::Index offset = 0;
  for (const auto& v : leaves) {
    const Matrix g = v.grad();
    out.segment(offset, g.size()) = Eigen::Map<const Vector>(g.data(), g.size());
    offset += g.size();
  }
  return out;
}

GradResult grad(const LossBuilder& builder, std::span<const Shape> shapes, const Vector& flat) {
  Tape tape;
  const auto leaves = unpack_leaves(tape, shapes, flat);
  const Var loss = builder(tape, leaves);
  tape.backward(loss);
  return {loss.scalar(), pack_grads(leaves)};
}

double evaluate(const LossBuilder& builder, std::span<const Shape> shapes, const Vector& flat) {
  Tape tape;
  const auto leaves = unpack_leaves(tape, shapes, flat);
  return builder(tape, leaves).scalar();
}

GradCheckResult gradcheck(const LossBuilder& builder, std::span<const Shape> shapes,
                          const Vector& flat, double h) {
  GradCheckResult r;
  r.analytic = grad(builder, shapes, flat).gradient;
  r.numeric.resize(flat.size());
  Vector x = flat;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    x[i] = flat[i] + h;
    const double fp = evaluate(builder, shapes, x);
    x[i] = flat[i] - h;
    const double fm = evaluate(builder, shapes, x);
    x[i] = flat[i];
    r.numeric[i] = (fp - fm) / (2.0 * h);
  }
  const double floor = 1e-6 * std::max(r.numeric.lpNorm<Eigen::Infinity>(), 1e-300);
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const double a = r.analytic[i];
    const double n = r.numeric[i];
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (err > r.max_relative_error || r.worst_index < 0) {
      r.max_relative_error = std::max(r.max_relative_error, err);
      r.worst_index = i;
    }
  }
  return r;
}

TangentResult time_tangent(const std::function<Dual(Tape&, const Dual&)>& model_forward, double t) {
  Tape tape;
  const Dual input{tape.constant(t), tape.constant(1.0)};
  const Dual out = model_forward(tape, input);
  TangentResult r;
  r.primal = out.primal.value();
  r.tangent = out.tangent ? out.tangent->value() : Matrix::Zero(r.primal.rows(), r.primal.cols());
  return r;
}

}  // namespace pignn::ad
