#pragma once

// Reference solvers for entropic optimal transport, used only by tests.
// They run in long double on the plain (non-log) kernel, share no code with
// the library solver, and are meant for tiny instances.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace wave::testing {

using Real = long double;

/// Closed form for n = 2: the coupling is [[t, 1/2 - t], [1/2 - t, t]] and the
/// first-order condition gives t / (1/2 - t) = exp(-(C11 + C22 - C12 - C21) / (2 eps)).
inline Real entropic_ot_two_points(const std::vector<double>& x, const std::vector<double>& y, double eps) {
  auto c = [&](int i, int j) {
    const Real d = static_cast<Real>(x[i]) - static_cast<Real>(y[j]);
    return d * d;
  };
  const Real e = eps;
  const Real delta = c(0, 0) + c(1, 1) - c(0, 1) - c(1, 0);
  // t = 0.5 * sigmoid(-delta / (2 eps)), written to avoid overflow.
  const Real z = -delta / (2 * e);
  const Real t = z >= 0 ? 0.5L / (1 + std::exp(-z)) : 0.5L * std::exp(z) / (1 + std::exp(z));
  const Real s = 0.5L - t;
  auto xlogx = [](Real v) { return v > 0 ? v * std::log(v) : Real(0); };
  return t * (c(0, 0) + c(1, 1)) + s * (c(0, 1) + c(1, 0)) + e * 2 * (xlogx(t) + xlogx(s));
}

struct OracleResult {
  Real distance = 0;
  Real marginal_violation = 0;
  long iterations = 0;
};

/// Plain kernel Sinkhorn in long double, iterated until the marginal error is
/// below `tol` (default 1e-14) or `max_iter` sweeps.
inline OracleResult entropic_ot_kernel(const std::vector<double>& x, const std::vector<double>& y, double eps,
                                       Real tol = 1e-14L, long max_iter = 2'000'000) {
  const std::size_t n = x.size();
  if (y.size() != n) throw std::invalid_argument("oracle: size mismatch");
  const Real e = eps;
  const Real w = Real(1) / n;
  std::vector<Real> cost(n * n), kernel(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Real d = static_cast<Real>(x[i]) - static_cast<Real>(y[j]);
      cost[i * n + j] = d * d;
      kernel[i * n + j] = std::exp(-d * d / e);
    }
  }
  std::vector<Real> u(n, 1), v(n, 1);
  OracleResult out;
  for (long it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      Real s = 0;
      for (std::size_t j = 0; j < n; ++j) s += kernel[i * n + j] * v[j];
      u[i] = w / s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      for (std::size_t i = 0; i < n; ++i) s += kernel[i * n + j] * u[i];
      v[j] = w / s;
    }
    Real viol = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Real s = 0;
      for (std::size_t j = 0; j < n; ++j) s += u[i] * kernel[i * n + j] * v[j];
      viol = std::max(viol, std::abs(s - w));
    }
    out.iterations = it + 1;
    out.marginal_violation = viol;
    if (viol <= tol) break;
  }
  Real total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Real p = u[i] * kernel[i * n + j] * v[j];
      if (p > 0) total += p * cost[i * n + j] + e * p * std::log(p);
    }
  }
  out.distance = total;
  return out;
}

/// Exact optimal transport with squared cost between uniform empirical
/// measures of equal size, by enumerating every permutation.
inline Real exact_ot_squared_bruteforce(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  Real best = INFINITY;
  do {
    Real s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Real d = static_cast<Real>(x[i]) - static_cast<Real>(y[perm[i]]);
      s += d * d;
    }
    best = std::min(best, s / x.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Mean |x_i - y_perm(i)| minimized over permutations.
inline Real exact_w1_bruteforce(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), 0);
  Real best = INFINITY;
  do {
    Real s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(static_cast<Real>(x[i]) - static_cast<Real>(y[perm[i]]));
    best = std::min(best, s / x.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace wave::testing
