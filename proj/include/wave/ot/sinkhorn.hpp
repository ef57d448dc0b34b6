#pragma once

#include "wave/nn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace wave::ot {

template <typename Scalar>
using SampleVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using CostMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Finite 1D sample set with uniform weights 1/n.
template <typename Scalar = double>
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(SampleVector<Scalar> values) : values_(std::move(values)) {
    if (values_.size() < 1) throw std::invalid_argument("empirical distribution needs at least one sample");
    if (!values_.allFinite()) throw NumericError("empirical distribution contains non-finite samples");
  }
  EmpiricalDistribution(std::initializer_list<Scalar> values)
      : EmpiricalDistribution(from_std(std::vector<Scalar>(values))) {}
  explicit EmpiricalDistribution(const std::vector<Scalar>& values) : EmpiricalDistribution(from_std(values)) {}

  const SampleVector<Scalar>& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }
  Scalar weight() const { return Scalar(1) / static_cast<Scalar>(values_.size()); }

 private:
  static SampleVector<Scalar> from_std(const std::vector<Scalar>& v) {
    return Eigen::Map<const SampleVector<Scalar>>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  SampleVector<Scalar> values_;
};

struct SinkhornOptions {
  double epsilon = 0.005;
  int max_iter = 200;
  double tol = 1e-9;
  bool operator==(const SinkhornOptions&) const = default;
};

template <typename Scalar = double>
struct SinkhornResult {
  /// sum_ij plan_ij * cost_ij - epsilon * H(plan); may be negative.
  Scalar distance = 0;
  /// Coupling with (approximately) uniform marginals 1/n.
  CostMatrix<Scalar> plan;
  int iterations = 0;
  bool converged = false;
  Scalar epsilon = 0;
  /// Largest |row or column sum - 1/n| of the returned plan.
  Scalar marginal_violation = 0;
};

namespace detail {

template <typename Scalar>
void require_same_size(const EmpiricalDistribution<Scalar>& xs, const EmpiricalDistribution<Scalar>& ys,
                       const char* op) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument(std::string(op) + ": sample counts differ (" + std::to_string(xs.size()) + " vs " +
                                std::to_string(ys.size()) + ")");
  }
}

// exp that returns exactly 0 instead of a subnormal; subnormal arithmetic is
// slow enough to dominate the solver on large scaled costs.
template <typename Derived>
auto flushed_exp(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar cutoff(-700);
  return (x < cutoff).select(Scalar(0), x.max(cutoff).exp());
}

template <typename Scalar>
Scalar max_marginal_violation(const CostMatrix<Scalar>& plan, Scalar weight) {
  using std::abs;
  const Scalar rows = (plan.rowwise().sum().array() - weight).abs().maxCoeff();
  const Scalar cols = (plan.colwise().sum().array() - weight).abs().maxCoeff();
  return std::max(rows, cols);
}

}  // namespace detail

/// Squared-distance cost C(i, j) = (x_i - y_j)^2.
template <typename Scalar>
CostMatrix<Scalar> cost_matrix(const EmpiricalDistribution<Scalar>& xs, const EmpiricalDistribution<Scalar>& ys) {
  detail::require_same_size(xs, ys, "cost_matrix");
  const auto& x = xs.values();
  const auto& y = ys.values();
  CostMatrix<Scalar> c(x.size(), y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) c.col(j) = (x.array() - y[j]).square();
  return c;
}

/// Entropic optimal transport between two equal-size empirical distributions.
///
/// Works on potentials F, G with plan_ij = exp((F_i + G_j - C_ij) / eps), so
/// small epsilon against large costs cannot underflow the scaling vectors.
/// Each iteration is a Sinkhorn sweep (row then column scaling, leaving the
/// column marginals exact) followed by a damped Newton step on F, which
/// removes the slow linear rate of plain scaling on nearly degenerate costs.
/// A non-converged result carries the last iterate.
template <typename Scalar>
SinkhornResult<Scalar> sinkhorn_distance(const EmpiricalDistribution<Scalar>& xs,
                                         const EmpiricalDistribution<Scalar>& ys,
                                         const SinkhornOptions& options = {}) {
  using std::exp;
  using std::log;
  using Vec = SampleVector<Scalar>;
  using Mat = CostMatrix<Scalar>;
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
  if (options.max_iter < 1) throw std::invalid_argument("sinkhorn: max_iter must be >= 1");
  detail::require_same_size(xs, ys, "sinkhorn");

  const Eigen::Index n = xs.size();
  const Scalar target_eps = static_cast<Scalar>(options.epsilon);
  const Scalar tol = static_cast<Scalar>(options.tol);
  const Scalar weight = xs.weight();
  const Scalar log_weight = log(weight);
  const Mat cost = cost_matrix(xs, ys);
  const Mat cost_t = cost.transpose();
  Scalar eps = target_eps;

  Vec f = Vec::Zero(n);
  Vec g = Vec::Zero(n);
  Vec row_lse(n);
  Vec rows(n);
  Vec scratch(n);

  // log sum_k exp((potential_k - cost_k) / eps) over one contiguous cost column.
  auto lse = [&](const Vec& potential, const auto& column) {
    scratch.array() = (potential - column).array() / eps;
    const Scalar m = scratch.maxCoeff();
    return m + log(detail::flushed_exp(scratch.array() - m).sum());
  };
  auto column_step = [&]() {
    for (Eigen::Index j = 0; j < n; ++j) g[j] = eps * (log_weight - lse(f, cost.col(j)));
  };
  auto row_step = [&]() {
    for (Eigen::Index i = 0; i < n; ++i) f[i] = eps * (log_weight - row_lse[i]);
  };
  // Row sums of the column-exact plan and their largest deviation from 1/n.
  auto refresh_rows = [&]() {
    for (Eigen::Index i = 0; i < n; ++i) row_lse[i] = lse(g, cost_t.col(i));
    rows.array() = detail::flushed_exp(f.array() / eps + row_lse.array());
    return (rows.array() - weight).abs().maxCoeff();
  };
  // Semi-dual <a, F> + <b, G(F)>; concave in F and increased by accepted steps.
  auto semi_dual = [&]() { return weight * (f.sum() + g.sum()); };
  auto check_finite = [&]() {
    if (!f.allFinite() || !g.allFinite()) {
      throw NumericError("sinkhorn: potentials overflowed (epsilon=" + std::to_string(options.epsilon) + ")");
    }
  };

  SinkhornResult<Scalar> result;
  result.epsilon = target_eps;
  Mat plan(n, n);
  Mat jac(n, n);

  // One sweep plus a guarded Newton step; returns the row violation after it.
  auto iterate = [&]() {
    row_step();
    column_step();
    check_finite();
    const Scalar violation = refresh_rows();
    if (violation <= tol) return violation;

    // Newton on r(F) = 1/n with G eliminated, in units of eps:
    // J = diag(r) - P diag(n) P^T. J is singular along the all-ones
    // direction, which the residual is orthogonal to, so a rank-one shift
    // makes it invertible without changing the solution.
    for (Eigen::Index j = 0; j < n; ++j) {
      plan.col(j).array() = detail::flushed_exp((f.array() + g[j] - cost.col(j).array()) / eps);
    }
    jac.noalias() = -(plan * plan.transpose()) / weight;
    jac.diagonal() += rows;
    jac.array() += weight * weight;
    Vec step = jac.ldlt().solve((Vec::Constant(n, weight) - rows).eval());
    if (!step.allFinite()) return violation;
    // Nearly decoupled blocks make J close to singular; cap the move.
    const Scalar largest = step.cwiseAbs().maxCoeff();
    const Scalar max_move = std::max(Scalar(10), cost.maxCoeff() / eps);
    if (largest > max_move) step *= max_move / largest;
    step *= eps;

    const Vec f0 = f, g0 = g, lse0 = row_lse, rows0 = rows;
    const Scalar base = semi_dual();
    const Scalar slope = (Vec::Constant(n, weight) - rows).dot(step);
    for (Scalar t = 1; t > Scalar(1e-6); t /= 2) {
      f = f0 + t * step;
      column_step();
      if (!f.allFinite() || !g.allFinite()) continue;
      const Scalar trial_violation = refresh_rows();
      if (semi_dual() >= base + Scalar(1e-4) * t * slope || trial_violation < violation / 2) return trial_violation;
    }
    f = f0;
    g = g0;
    row_lse = lse0;
    rows = rows0;
    return violation;
  };

  // Epsilon scaling: large potential shifts are cheap at large eps, so walk
  // eps down from the cost scale, warm-starting each stage. Half the budget
  // goes to the intermediate stages.
  const Scalar max_cost = cost.maxCoeff();
  std::vector<Scalar> stages;
  for (Scalar e = max_cost / 4; e > 16 * target_eps; e /= 4) stages.push_back(e);
  int budget = options.max_iter;
  int annealing_budget = options.max_iter / 2;
  for (Scalar stage_eps : stages) {
    eps = stage_eps;
    Scalar violation = refresh_rows();
    for (int k = 0; k < 10 && annealing_budget > 0 && violation > weight * Scalar(1e-3); ++k) {
      violation = iterate();
      --annealing_budget;
      --budget;
      ++result.iterations;
    }
  }
  eps = target_eps;
  Scalar violation = refresh_rows();
  while (budget > 0) {
    --budget;
    ++result.iterations;
    violation = iterate();
    if (violation <= tol) {
      result.converged = true;
      break;
    }
  }

  Mat log_plan(n, n);
  for (Eigen::Index j = 0; j < n; ++j) log_plan.col(j) = (f.array() + g[j] - cost.col(j).array()) / eps;
  result.plan = detail::flushed_exp(log_plan.array()).matrix();
  if (!result.plan.allFinite()) throw NumericError("sinkhorn: transport plan is not finite");

  Scalar transport = 0;
  Scalar neg_entropy = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Scalar p = result.plan(i, j);
      if (p > 0) {
        transport += p * cost(i, j);
        neg_entropy += p * log_plan(i, j);
      }
    }
  }
  result.distance = transport + target_eps * neg_entropy;
  result.marginal_violation = detail::max_marginal_violation(result.plan, weight);
  result.converged = result.converged && result.marginal_violation <= tol;
  return result;
}

/// Exact Wasserstein-1 distance on the line: mean |sorted(x)_i - sorted(y)_i|.
template <typename Scalar>
Scalar exact_wasserstein1_1d(const EmpiricalDistribution<Scalar>& xs, const EmpiricalDistribution<Scalar>& ys) {
  detail::require_same_size(xs, ys, "exact_wasserstein1_1d");
  std::vector<Scalar> a(xs.values().data(), xs.values().data() + xs.size());
  std::vector<Scalar> b(ys.values().data(), ys.values().data() + ys.size());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  Scalar total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    using std::abs;
    total += abs(a[i] - b[i]);
  }
  return total / static_cast<Scalar>(a.size());
}

/// Gradient of the Sinkhorn objective with respect to the positions xs,
/// holding the optimal plan fixed: g_i = sum_j plan_ij * 2 (x_i - y_j).
/// ys receives no gradient.
template <typename Scalar>
SampleVector<Scalar> sinkhorn_gradient_unchecked(const SinkhornResult<Scalar>& result,
                                                 const EmpiricalDistribution<Scalar>& xs,
                                                 const EmpiricalDistribution<Scalar>& ys) {
  detail::require_same_size(xs, ys, "sinkhorn_gradient");
  if (result.plan.rows() != xs.size() || result.plan.cols() != ys.size()) {
    throw std::invalid_argument("sinkhorn_gradient: plan shape does not match the samples");
  }
  const auto& x = xs.values();
  const auto& y = ys.values();
  SampleVector<Scalar> grad = Scalar(2) * (result.plan.rowwise().sum().array() * x.array()).matrix();
  grad.noalias() -= Scalar(2) * result.plan * y;
  return grad;
}

/// As sinkhorn_gradient_unchecked, but refuses results that did not converge.
template <typename Scalar>
SampleVector<Scalar> sinkhorn_gradient(const SinkhornResult<Scalar>& result, const EmpiricalDistribution<Scalar>& xs,
                                       const EmpiricalDistribution<Scalar>& ys) {
  if (!result.converged) {
    throw std::logic_error("sinkhorn_gradient: result did not converge (violation " +
                           std::to_string(static_cast<double>(result.marginal_violation)) + ")");
  }
  return sinkhorn_gradient_unchecked(result, xs, ys);
}

}  // namespace wave::ot
