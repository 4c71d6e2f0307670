#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Every node on a Tape holds an Eigen matrix. Nodes are appended in
// evaluation order, so the reverse sweep is a single backward walk. Forward
// tangents (Dual) are built from the same primitives, which makes their
// parameter gradients available from the same sweep.

#include "pignn/core.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pignn::ad {

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  Shift,
  MatMul,
  AddRow,
  MulCol,
  MulRow,
  Tanh,
  TanhTangent,
  Sigmoid,
  Softplus,
  Exp,
  Log,
  Square,
  Rsqrt,
  Relu,
  Abs,
  Sum,
  Mean,
  MeanPowAbs,
  ColSum,
  RowSum,
  HConcat,
  Reshape,
  NonzeroOrOne,
  RowBlock,
};

const char* op_name(Op op);

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  /// Zeros when no gradient reached this node.
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

class Tape {
 public:
  /// A leaf node. Gradients are accumulated for it when `requires_grad`.
  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var constant(double value);

  /// Records a primitive. Throws NonFiniteError when the result has a
  /// non-finite entry.
  Var record(Op op, int a, int b, double scalar, Matrix value);

  /// Zeroes every gradient, seeds d(out)/d(out) = 1 and sweeps backwards.
  /// `out` must be 1x1. Safe to call repeatedly.
  void backward(Var out);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Matrix grad(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Op op = Op::Leaf;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    bool needs_grad = false;
    Matrix value;
    Matrix grad;
  };

  void accumulate(int id, const Matrix& g);

  std::vector<Node> nodes_;
};

// Elementwise and broadcasting primitives. Shapes must agree exactly except
// where noted.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var shift(Var a, double s);
Var matmul(Var a, Var b);
/// x [n x d] + row [1 x d] broadcast over rows.
Var add_row(Var x, Var row);
/// x [n x d] scaled row-wise by col [n x 1].
Var mul_col(Var x, Var col);
/// x [n x d] scaled column-wise by row [1 x d].
Var mul_row(Var x, Var row);
Var tanh(Var a);
/// (1 - y^2) * u for y = tanh(.), the tangent of tanh.
Var tanh_tangent(Var y, Var u);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var rsqrt(Var a);
Var relu(Var a);
Var abs(Var a);
Var sum(Var a);
Var mean(Var a);
/// mean(|a|^m) for m >= 1.
Var mean_pow_abs(Var a, double m);
Var col_sum(Var a);  // [1 x d]
Var row_sum(Var a);  // [n x 1]
Var hconcat(Var a, Var b);
/// Column-major reinterpretation to rows x cols.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Entries equal to zero become one; others pass through.
Var nonzero_or_one(Var a);
/// Rows [begin, begin + count).
Var row_block(Var a, Eigen::Index begin, Eigen::Index count);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

/// A primal value with an optional tangent along the time input. A missing
/// tangent means the value is constant in time.
struct Dual {
  Var primal;
  std::optional<Var> tangent;
};

Dual add(const Dual& a, const Dual& b);
Dual scale(const Dual& a, double s);
Dual matmul(const Dual& a, Var w);
Dual add_row(const Dual& x, Var row);
Dual hconcat(const Dual& a, const Dual& b);
Dual tanh(const Dual& a);
Dual softplus(const Dual& a);
Dual mul(const Dual& a, const Dual& b);
/// Throws: relu has a kink, so it is rejected once a tangent flows through it.
Dual relu(const Dual& a);

/// Parameter shapes for a flat, column-major-by-block parameter vector.
using Shape = std::pair<Eigen::Index, Eigen::Index>;

Eigen::Index flat_size(std::span<const Shape> shapes);
std::vector<Var> unpack_leaves(Tape& tape, std::span<const Shape> shapes, const Vector& flat);
Vector pack_grads(std::span<const Var> leaves);

using LossBuilder = std::function<Var(Tape&, std::span<const Var>)>;

struct GradResult {
  double value = 0.0;
  Vector gradient;
};

/// Exact reverse-mode gradient of a scalar loss.
GradResult grad(const LossBuilder& builder, std::span<const Shape> shapes, const Vector& flat);
double evaluate(const LossBuilder& builder, std::span<const Shape> shapes, const Vector& flat);

struct GradCheckResult {
  Vector analytic;
  Vector numeric;
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
};

/// Central finite differences against the reverse-mode gradient. Each
/// entry's error is |a - n| / max(|a|, |n|, floor) with floor =
/// 1e-6 * max|n|, so entries that are zero to rounding do not dominate.
GradCheckResult gradcheck(const LossBuilder& builder, std::span<const Shape> shapes,
                          const Vector& flat, double h = 1e-5);

struct TangentResult {
  Matrix primal;
  Matrix tangent;
};

/// Seeds tangent 1 on the scalar time input t and runs the forward model.
TangentResult time_tangent(const std::function<Dual(Tape&, const Dual&)>& model_forward, double t);

}  // namespace pignn::ad
