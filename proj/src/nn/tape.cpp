#include "wave/nn/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace wave::nn {

const Matrix& Var::value() const { return tape_->value_of(id_); }
bool Var::requires_grad() const { return tape_->requires_grad_of(id_); }

void Tape::require_open() const {
  if (consumed_) throw std::logic_error("tape already consumed by backward(); call reset() before recording");
}

Var Tape::record(Matrix value, std::vector<std::size_t> parents, BackwardFn backward) {
  require_open();
  Node node;
  node.value = std::move(value);
  for (auto p : parents) node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return record(std::move(value), {}, nullptr); }

Var Tape::input(Matrix value) {
  Var v = record(std::move(value), {}, nullptr);
  nodes_[v.id()].requires_grad = true;
  return v;
}

Var Tape::parameter(const std::string& name, const Tensor& value, bool requires_grad) {
  Var v = record(Matrix(value.matrix()), {}, nullptr);
  auto& node = nodes_[v.id()];
  node.requires_grad = requires_grad;
  node.parameter = name;
  node.shape = value.shape();
  return v;
}

void Tape::accumulate(std::size_t id, const Eigen::Ref<const Matrix>& g) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::accumulate_owned(std::size_t id, Matrix&& g) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = std::move(g);
  } else {
    node.grad += g;
  }
}

ParameterSet Tape::backward(Var loss) {
  if (consumed_) throw std::logic_error("backward() called twice on the same recording");
  if (loss.tape_ != this) throw std::invalid_argument("loss node belongs to a different tape");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got " + std::to_string(lv.rows()) + "x" +
                                std::to_string(lv.cols()));
  }
  consumed_ = true;
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (nodes_[loss.id()].requires_grad) nodes_[loss.id()].grad = Matrix::Ones(1, 1);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0 || !node.backward) continue;
    node.backward(*this, i);
  }

  ParameterSet grads;
  for (auto& node : nodes_) {
    if (!node.parameter || !node.requires_grad) continue;
    Tensor g(node.shape);
    if (node.grad.size() != 0) g.matrix() = node.grad;
    if (!grads.contains(*node.parameter)) {
      grads.add(*node.parameter, std::move(g));
    } else {
      grads.at(*node.parameter).matrix() += g.matrix();
    }
  }
  for (auto& node : nodes_) node.backward = nullptr;
  return grads;
}

Matrix Tape::gradient(Var v) const {
  const auto& node = nodes_[v.id()];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

namespace {

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
}

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul_transposed(Var x, Var w) {
  same_tape(x, w);
  if (x.cols() != w.cols()) {
    throw std::invalid_argument("matmul: input width " + std::to_string(x.cols()) + " vs weight width " +
                                std::to_string(w.cols()));
  }
  Matrix out;
  out.noalias() = x.value() * w.value().transpose();
  const auto xi = x.id(), wi = w.id();
  return x.tape().record(std::move(out), {xi, wi}, [xi, wi](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad_of(xi)) {
      Matrix gx;
      gx.noalias() = g * t.value_of(wi);
      t.accumulate_owned(xi, std::move(gx));
    }
    if (t.requires_grad_of(wi)) {
      Matrix gw;
      gw.noalias() = g.transpose() * t.value_of(xi);
      t.accumulate_owned(wi, std::move(gw));
    }
  });
}

Var add_row(Var x, Var row) {
  same_tape(x, row);
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw std::invalid_argument("add_row: row of width " + std::to_string(row.cols()) + " for input width " +
                                std::to_string(x.cols()));
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  const auto xi = x.id(), ri = row.id();
  return x.tape().record(std::move(out), {xi, ri}, [xi, ri](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    t.accumulate(xi, g);
    if (t.requires_grad_of(ri)) t.accumulate(ri, g.colwise().sum());
  });
}

Matrix affine_value(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& w,
                    const Eigen::Ref<const RowVector>& b) {
  Matrix out;
  out.noalias() = x * w.transpose();
  out.rowwise() += b;
  return out;
}

Var affine(Var x, Var w, Var b) {
  same_tape(x, w);
  same_tape(x, b);
  if (x.cols() != w.cols()) {
    throw std::invalid_argument("affine: input width " + std::to_string(x.cols()) + " vs weight width " +
                                std::to_string(w.cols()));
  }
  if (b.rows() != 1 || b.cols() != w.rows()) {
    throw std::invalid_argument("affine: bias of width " + std::to_string(b.cols()) + " for " +
                                std::to_string(w.rows()) + " outputs");
  }
  Matrix out = affine_value(x.value(), w.value(), b.value().row(0));
  const auto xi = x.id(), wi = w.id(), bi = b.id();
  return x.tape().record(std::move(out), {xi, wi, bi}, [xi, wi, bi](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad_of(bi)) t.accumulate(bi, g.colwise().sum());
    if (t.requires_grad_of(wi)) {
      Matrix gw;
      gw.noalias() = g.transpose() * t.value_of(xi);
      t.accumulate_owned(wi, std::move(gw));
    }
    if (t.requires_grad_of(xi)) {
      Matrix gx;
      gx.noalias() = g * t.value_of(wi);
      t.accumulate_owned(xi, std::move(gx));
    }
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad_of(self));
    t.accumulate(bi, t.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  const auto ai = a.id(), bi = b.id();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad_of(self));
    if (t.requires_grad_of(bi)) t.accumulate(bi, -t.grad_of(self));
  });
}

Var scale(Var a, double s) {
  Matrix out = s * a.value();
  const auto ai = a.id();
  return a.tape().record(std::move(out), {ai}, [ai, s](Tape& t, std::size_t self) {
    t.accumulate(ai, s * t.grad_of(self));
  });
}

Var relu(Var x) {
  Matrix out = x.value().cwiseMax(0.0);
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    const Matrix& xv = t.value_of(xi);
    Matrix g = (xv.array() > 0.0).select(t.grad_of(self), 0.0);
    t.accumulate_owned(xi, std::move(g));
  });
}

Var tanh(Var x) {
  Matrix out = x.value().array().tanh().matrix();
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    const Matrix& y = t.value_of(self);
    t.accumulate(xi, (t.grad_of(self).array() * (1.0 - y.array().square())).matrix());
  });
}

Var scale_shift(Var x, const RowVector& scale_row, const RowVector& shift_row) {
  if (scale_row.size() != x.cols() || shift_row.size() != x.cols()) {
    throw std::invalid_argument("scale_shift: row width does not match input width");
  }
  Matrix out = (x.value().array().rowwise() * scale_row.array()).rowwise() + shift_row.array();
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, scale_row](Tape& t, std::size_t self) {
    t.accumulate(xi, (t.grad_of(self).array().rowwise() * scale_row.array()).matrix());
  });
}

Matrix layer_norm_value(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const RowVector>& gain,
                        const Eigen::Ref<const RowVector>& offset, double eps) {
  const auto n = x.cols();
  if (n < 1) throw std::invalid_argument("layer_norm: normalized dimension must be at least 1");
  if (gain.size() != n || offset.size() != n) {
    throw std::invalid_argument("layer_norm: gain/offset width does not match input width");
  }
  Matrix out(x.rows(), n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    out.row(r) = ((x.row(r).array() - mu) * inv * gain.array() + offset.array()).matrix();
  }
  return out;
}

Var layer_norm(Var x, Var gain, Var offset, double eps) {
  same_tape(x, gain);
  same_tape(x, offset);
  const auto n = x.cols();
  if (n < 1) throw std::invalid_argument("layer_norm: normalized dimension must be at least 1");
  if (gain.rows() != 1 || gain.cols() != n || offset.rows() != 1 || offset.cols() != n) {
    throw std::invalid_argument("layer_norm: gain/offset width does not match input width");
  }
  const Matrix& xv = x.value();
  Matrix normalized(xv.rows(), n);
  Vector inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (xv.row(r).array() - mu) * inv_std[r];
  }
  Matrix out = (normalized.array().rowwise() * gain.value().row(0).array()).rowwise() +
               offset.value().row(0).array();
  const auto xi = x.id(), gi = gain.id(), oi = offset.id();
  return x.tape().record(
      std::move(out), {xi, gi, oi},
      [xi, gi, oi, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        if (t.requires_grad_of(gi)) t.accumulate(gi, (g.array() * normalized.array()).colwise().sum().matrix());
        if (t.requires_grad_of(oi)) t.accumulate(oi, g.colwise().sum());
        if (t.requires_grad_of(xi)) {
          const Matrix dn = (g.array().rowwise() * t.value_of(gi).row(0).array()).matrix();
          Matrix dx(dn.rows(), dn.cols());
          for (Eigen::Index r = 0; r < dn.rows(); ++r) {
            const double mean_dn = dn.row(r).mean();
            const double mean_dn_n = (dn.row(r).array() * normalized.row(r).array()).mean();
            dx.row(r) = inv_std[r] * (dn.row(r).array() - mean_dn - normalized.row(r).array() * mean_dn_n);
          }
          t.accumulate_owned(xi, std::move(dx));
        }
      });
}

Var concat_cols(Var a, Var b) {
  same_tape(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const auto ai = a.id(), bi = b.id();
  const auto ac = a.cols(), bc = b.cols();
  return a.tape().record(std::move(out), {ai, bi}, [ai, bi, ac, bc](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad_of(ai)) t.accumulate(ai, g.leftCols(ac));
    if (t.requires_grad_of(bi)) t.accumulate(bi, g.rightCols(bc));
  });
}

Var sum(Var x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    const Matrix& xv = t.value_of(xi);
    t.accumulate(xi, Matrix::Constant(xv.rows(), xv.cols(), t.grad_of(self)(0, 0)));
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  Matrix out(1, 1);
  out(0, 0) = x.value().mean();
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, n](Tape& t, std::size_t self) {
    const Matrix& xv = t.value_of(xi);
    t.accumulate(xi, Matrix::Constant(xv.rows(), xv.cols(), t.grad_of(self)(0, 0) / n));
  });
}

Var mean_square(Var x) {
  const double n = static_cast<double>(x.value().size());
  Matrix out(1, 1);
  out(0, 0) = x.value().squaredNorm() / n;
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, n](Tape& t, std::size_t self) {
    t.accumulate(xi, (2.0 * t.grad_of(self)(0, 0) / n) * t.value_of(xi));
  });
}

Var external_scalar(Var x, double value, const Matrix& grad) {
  if (grad.rows() != x.rows() || grad.cols() != x.cols()) {
    throw std::invalid_argument("external_scalar: gradient shape does not match operand");
  }
  Matrix out(1, 1);
  out(0, 0) = value;
  const auto xi = x.id();
  return x.tape().record(std::move(out), {xi}, [xi, grad](Tape& t, std::size_t self) {
    t.accumulate(xi, t.grad_of(self)(0, 0) * grad);
  });
}

}  // namespace wave::nn
