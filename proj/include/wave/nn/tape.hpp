#pragma once

#include "wave/nn/parameters.hpp"
#include "wave/nn/tensor.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace wave::nn {

class Tape;

/// Handle to a matrix-valued node recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records matrix operations in execution order and replays them backwards.
///
/// A tape supports exactly one backward pass. Recording on a consumed tape or
/// calling backward twice throws; `reset()` clears it for reuse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf bound to a named parameter. Gradients are reported under `name`
  /// only when `requires_grad` is set.
  Var parameter(const std::string& name, const Tensor& value, bool requires_grad = true);
  /// Leaf that receives a gradient but is not a named parameter.
  Var input(Matrix value);

  /// Runs the backward pass from a 1x1 node and returns d(loss)/d(parameter)
  /// for every parameter leaf recorded with requires_grad, in recording order.
  ParameterSet backward(Var loss);

  /// Gradient of the last backward pass with respect to `v`; zero if no
  /// gradient reached it.
  Matrix gradient(Var v) const;

  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }
  void reset();

  // Internal node interface used by the op implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward);
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad_of(std::size_t id) const { return nodes_[id].requires_grad; }
  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
  /// Adds `g` to the gradient of node `id` if it requires one.
  void accumulate(std::size_t id, const Eigen::Ref<const Matrix>& g);
  void accumulate_owned(std::size_t id, Matrix&& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    std::optional<std::string> parameter;
    std::vector<std::size_t> shape;
  };

  void require_open() const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Differentiable operations. All operands must live on the same tape.

/// x * w^T + b with x [batch, in], w [out, in], b [1, out].
Var affine(Var x, Var w, Var b);
Var matmul_transposed(Var x, Var w);
Var add_row(Var x, Var row);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var x);
Var tanh(Var x);
/// Per-column affine map y = x .* scale + shift with constant rows.
Var scale_shift(Var x, const RowVector& scale, const RowVector& shift);
/// Row-wise layer normalization with learned gain and offset rows.
Var layer_norm(Var x, Var gain, Var offset, double eps = 1e-5);
Var concat_cols(Var a, Var b);
Var sum(Var x);
Var mean(Var x);
/// mean over all entries of x^2.
Var mean_square(Var x);
/// 1x1 node whose value is `value` and whose gradient with respect to x is
/// `grad` (same shape as x). Used to splice externally computed gradients,
/// such as an optimal-transport envelope gradient, into the graph.
Var external_scalar(Var x, double value, const Matrix& grad);

Matrix affine_value(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& w,
                    const Eigen::Ref<const RowVector>& b);
/// Plain-value layer norm shared by the tape op and tests.
Matrix layer_norm_value(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const RowVector>& gain,
                        const Eigen::Ref<const RowVector>& offset, double eps = 1e-5);

}  // namespace wave::nn
