#include "wave/theory/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace wave::theory {

namespace {

void dirichlet_rows(Matrix& m, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = g(rng);
    m.row(r) /= m.row(r).sum();
  }
}

void check_stochastic(const Matrix& m, const char* what) {
  if ((m.array() < 0.0).any()) throw std::invalid_argument(std::string(what) + " has negative entries");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (std::abs(m.row(r).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument(std::string(what) + " row " + std::to_string(r) + " does not sum to 1");
    }
  }
}

QTable reshape(const Vector& flat, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const Matrix>(flat.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

double sup_norm(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

void TabularMDP::validate() const {
  const auto s = static_cast<Eigen::Index>(n_states);
  const auto a = static_cast<Eigen::Index>(n_actions);
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMDP: empty state or action set");
  if (transitions.rows() != s * a || transitions.cols() != s) {
    throw std::invalid_argument("TabularMDP: transitions must be [S*A, S]");
  }
  if (rewards.rows() != s || rewards.cols() != a) throw std::invalid_argument("TabularMDP: rewards must be [S, A]");
  if (policy.rows() != s || policy.cols() != a) throw std::invalid_argument("TabularMDP: policy must be [S, A]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMDP: gamma must be in [0, 1)");
  check_stochastic(transitions, "transitions");
  check_stochastic(policy, "policy");
  if (rewards.cwiseAbs().maxCoeff() > r_max) throw std::invalid_argument("TabularMDP: reward exceeds r_max");
}

TabularMDP random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  const auto s = static_cast<Eigen::Index>(n_states);
  const auto a = static_cast<Eigen::Index>(n_actions);
  mdp.transitions.resize(s * a, s);
  dirichlet_rows(mdp.transitions, rng);
  mdp.policy.resize(s, a);
  dirichlet_rows(mdp.policy, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  mdp.rewards = Matrix::NullaryExpr(s, a, [&] { return u(rng); });
  mdp.r_max = 1.0;
  mdp.validate();
  return mdp;
}

QTable bellman_operator(const TabularMDP& mdp, const QTable& q) {
  if (q.rows() != mdp.rewards.rows() || q.cols() != mdp.rewards.cols()) {
    throw std::invalid_argument("bellman_operator: Q-table shape does not match the MDP");
  }
  const Vector v = (mdp.policy.array() * q.array()).rowwise().sum();
  const Vector next = mdp.transitions * v;
  return mdp.rewards + mdp.gamma * reshape(next, mdp.n_states, mdp.n_actions);
}

QTable policy_evaluation(const TabularMDP& mdp) {
  const auto s = static_cast<Eigen::Index>(mdp.n_states);
  const auto a = static_cast<Eigen::Index>(mdp.n_actions);
  Matrix p_pi = Matrix::Zero(s, s);
  Vector r_pi = Vector::Zero(s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = 0; j < a; ++j) {
      p_pi.row(i) += mdp.policy(i, j) * mdp.transitions.row(i * a + j);
      r_pi[i] += mdp.policy(i, j) * mdp.rewards(i, j);
    }
  }
  const Matrix system = Matrix::Identity(s, s) - mdp.gamma * p_pi;
  const Vector v = system.fullPivLu().solve(r_pi);
  const Vector next = mdp.transitions * v;
  return mdp.rewards + mdp.gamma * reshape(next, mdp.n_states, mdp.n_actions);
}

QTable value_iteration(const TabularMDP& mdp, double tol, int max_iter) {
  QTable q = QTable::Zero(mdp.rewards.rows(), mdp.rewards.cols());
  for (int i = 0; i < max_iter; ++i) {
    QTable next = bellman_operator(mdp, q);
    const double change = sup_norm(next - q);
    q = std::move(next);
    if (change <= tol) return q;
  }
  throw std::runtime_error("value_iteration: no convergence within " + std::to_string(max_iter) + " iterations");
}

Vector flatten_q(const QTable& q) { return Eigen::Map<const Vector>(q.data(), q.size()); }

QTable regularized_bellman_operator(const TabularMDP& mdp, const QTable& q, const QTable& q_prev, double lambda,
                                    const ot::SinkhornOptions& sinkhorn) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("regularized_bellman_operator: lambda must be >= 0");
  if (q_prev.rows() != q.rows() || q_prev.cols() != q.cols()) {
    throw std::invalid_argument("regularized_bellman_operator: q and q_prev differ in shape");
  }
  QTable out = bellman_operator(mdp, q);
  if (lambda == 0.0) return out;
  const ot::EmpiricalDistribution<double> xs(flatten_q(q));
  const ot::EmpiricalDistribution<double> ys(flatten_q(q_prev));
  const auto result = ot::sinkhorn_distance(xs, ys, sinkhorn);
  if (!result.converged) {
    throw std::runtime_error("regularized_bellman_operator: Sinkhorn did not converge (violation " +
                             std::to_string(result.marginal_violation) + ")");
  }
  const Vector g = ot::sinkhorn_gradient(result, xs, ys);
  return out - lambda * reshape(g, mdp.n_states, mdp.n_actions);
}

ContractionReport measure_contraction(const TabularMDP& mdp, double lambda, std::size_t trials,
                                      std::uint64_t seed, const ot::SinkhornOptions& sinkhorn) {
  if (trials < 1) throw std::invalid_argument("measure_contraction: trials must be >= 1");
  std::mt19937_64 rng(seed);
  const double bound = mdp.r_max / (1.0 - mdp.gamma);
  std::uniform_real_distribution<double> u(-bound, bound);
  const auto s = mdp.rewards.rows(), a = mdp.rewards.cols();
  auto draw = [&] { return QTable(QTable::NullaryExpr(s, a, [&] { return u(rng); })); };
  ContractionReport rep;
  rep.op = lambda > 0.0 ? "regularized" : "standard";
  rep.lambda = lambda;
  rep.gamma = mdp.gamma;
  rep.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const QTable q1 = draw(), q2 = draw(), prev = draw();
    const QTable t1 = regularized_bellman_operator(mdp, q1, prev, lambda, sinkhorn);
    const QTable t2 = regularized_bellman_operator(mdp, q2, prev, lambda, sinkhorn);
    rep.measured_factor = std::max(rep.measured_factor, sup_norm(t1 - t2) / sup_norm(q1 - q2));
    const double w_in = ot::exact_wasserstein1_1d(ot::EmpiricalDistribution<double>(flatten_q(q1)),
                                                  ot::EmpiricalDistribution<double>(flatten_q(q2)));
    const double w_out = ot::exact_wasserstein1_1d(ot::EmpiricalDistribution<double>(flatten_q(t1)),
                                                   ot::EmpiricalDistribution<double>(flatten_q(t2)));
    if (w_in > 0.0) rep.measured_factor_w1 = std::max(rep.measured_factor_w1, w_out / w_in);
  }
  return rep;
}

double fit_contraction_constant(const ContractionReport& standard, const std::vector<ContractionReport>& regularized) {
  if (!(standard.measured_factor > 0.0)) throw std::invalid_argument("fit_contraction_constant: standard factor is 0");
  double num = 0.0, den = 0.0;
  for (const auto& r : regularized) {
    if (r.lambda <= 0.0) continue;
    num += r.lambda * (1.0 - r.measured_factor / standard.measured_factor);
    den += r.lambda * r.lambda;
  }
  if (den == 0.0) throw std::invalid_argument("fit_contraction_constant: no report with lambda > 0");
  return num / den;
}

std::vector<std::size_t> log_spaced_ks(std::size_t k_max, std::size_t points_per_decade) {
  if (k_max < 1 || points_per_decade < 1) throw std::invalid_argument("log_spaced_ks: bad arguments");
  std::vector<std::size_t> ks{1};
  const double top = std::log10(static_cast<double>(k_max));
  const auto steps = static_cast<std::size_t>(std::ceil(top * static_cast<double>(points_per_decade)));
  for (std::size_t i = 1; i <= steps; ++i) {
    const double e = std::min(top, static_cast<double>(i) / static_cast<double>(points_per_decade));
    const auto k = static_cast<std::size_t>(std::llround(std::pow(10.0, e)));
    if (k > ks.back() && k <= k_max) ks.push_back(k);
  }
  if (ks.back() != k_max) ks.push_back(k_max);
  return ks;
}

std::vector<double> recursion_bound(double a, double m, double G, double phi1, std::size_t k_max) {
  std::vector<double> phi(k_max);
  if (k_max == 0) return phi;
  phi[0] = phi1;
  for (std::size_t k = 1; k < k_max; ++k) {
    const double kk = static_cast<double>(k);
    phi[k] = (1.0 - 2.0 * a * m / kk) * phi[k - 1] + a * a * G * G / (kk * kk);
  }
  return phi;
}

std::pair<double, double> loglog_fit(const std::vector<RatePoint>& curve, std::size_t from, std::size_t to) {
  std::vector<double> xs, ys;
  for (const auto& p : curve) {
    if (p.k < from || p.k > to) continue;
    if (!(p.mse > 0.0)) throw std::runtime_error("loglog_fit: non-positive mse at k = " + std::to_string(p.k));
    xs.push_back(std::log(static_cast<double>(p.k)));
    ys.push_back(std::log(p.mse));
  }
  if (xs.size() < 2) throw std::invalid_argument("loglog_fit: fewer than two points in range");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

ConvergenceReport convergence_rate_experiment(const ConvergenceConfig& cfg) {
  if (!(cfg.a > 0.0) || !(cfg.m > 0.0) || !(cfg.G >= 0.0)) {
    throw std::invalid_argument("convergence_rate_experiment: need a > 0, m > 0, G >= 0");
  }
  if (cfg.G > 0.0 && !(cfg.a * cfg.m > 0.5)) {
    throw std::invalid_argument("convergence_rate_experiment: the C/k rate needs a * m > 1/2");
  }
  if (cfg.dim < 1 || cfg.seeds < 1 || cfg.k_max < 2) {
    throw std::invalid_argument("convergence_rate_experiment: dim, seeds >= 1 and k_max >= 2 required");
  }
  const double radius = cfg.G > 0.0 ? cfg.G / (2.0 * cfg.m) : 1.0;
  const double noise = cfg.G / 2.0;
  const auto dim = static_cast<Eigen::Index>(cfg.dim);
  const std::vector<std::size_t> ks = log_spaced_ks(cfg.k_max, cfg.points_per_decade);
  std::vector<double> sum(ks.size(), 0.0);

  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    std::mt19937_64 rng(agent::derive_seed(cfg.seed, s));
    std::normal_distribution<double> normal(0.0, 1.0);
    auto direction = [&] {
      Vector d = Vector::NullaryExpr(dim, [&] { return normal(rng); });
      return Vector(d / d.norm());
    };
    const Vector theta_star = Vector::NullaryExpr(dim, [&] { return normal(rng); });
    Vector theta = theta_star + radius * direction();
    std::size_t next = 0;
    for (std::size_t k = 1; k <= cfg.k_max; ++k) {
      if (k == ks[next]) {
        sum[next] += (theta - theta_star).squaredNorm();
        ++next;
      }
      if (k == cfg.k_max) break;
      Vector g = cfg.m * (theta - theta_star);
      if (noise > 0.0) g += noise * direction();
      theta -= (cfg.a / static_cast<double>(k)) * g;
      const Vector e = theta - theta_star;
      const double n = e.norm();
      if (n > radius) theta = theta_star + (radius / n) * e;
      if (!theta.allFinite()) throw NumericError("convergence_rate_experiment: iterate diverged");
    }
  }

  ConvergenceReport rep;
  rep.config = cfg;
  const std::vector<double> bound = recursion_bound(cfg.a, cfg.m, cfg.G, radius * radius, cfg.k_max);
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const RatePoint p{ks[i], sum[i] / static_cast<double>(cfg.seeds), bound[ks[i] - 1]};
    if (!(p.mse <= p.bound)) rep.bound_holds = false;
    if (!rep.curve.empty() && !(p.mse < rep.curve.back().mse)) rep.monotone = false;
    rep.curve.push_back(p);
  }
  if (cfg.G > 0.0) {
    const auto [slope, intercept] = loglog_fit(rep.curve, cfg.fit_from, cfg.k_max);
    rep.fitted_slope = slope;
    rep.fitted_C = std::exp(intercept);
  }
  return rep;
}

double sample_variance(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / (n - 1.0);
}

ArmRun run_variance_arm(const envs::Environment& env, const agent::Td3Config& td3, const agent::WaveConfig& wave,
                        std::uint64_t seed, const VarianceWindow& window, std::size_t max_episodes,
                        const std::function<bool(const std::vector<agent::EpisodeLog>&)>& keep_going) {
  if (window.first_update > window.last_update) throw std::invalid_argument("variance window is empty");
  agent::Trainer trainer(env, td3, wave, seed);
  std::vector<double> norms;
  trainer.set_update_observer([&](const agent::UpdateEvent& e) {
    if (e.update >= window.first_update && e.update <= window.last_update) norms.push_back(e.critic->update_norm);
  });
  ArmRun run;
  run.seed = seed;
  while (run.logs.size() < max_episodes) {
    run.logs.push_back(trainer.run_episode());
    const bool window_done = trainer.stats().critic_updates >= window.last_update;
    if (window_done && !(keep_going && keep_going(run.logs))) break;
  }
  run.samples = norms.size();
  run.variance = sample_variance(norms);
  return run;
}

double median_ratio(const std::vector<VariancePair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("median_ratio: no pairs");
  std::vector<double> r;
  for (const auto& p : pairs) r.push_back(p.var_off > 0.0 ? p.var_on / p.var_off : (p.var_on > 0.0 ? INFINITY : 1.0));
  std::sort(r.begin(), r.end());
  const std::size_t n = r.size();
  return n % 2 == 1 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
}

VarianceReport variance_experiment(const envs::Environment& env, const std::vector<std::uint64_t>& seeds,
                                   const VarianceWindow& window, const agent::Td3Config& td3,
                                   const agent::WaveConfig& lambda_on, const agent::WaveConfig& lambda_off,
                                   std::size_t max_episodes) {
  VarianceReport rep;
  rep.window = window;
  for (auto seed : seeds) {
    const ArmRun on = run_variance_arm(env, td3, lambda_on, seed, window, max_episodes);
    const ArmRun off = run_variance_arm(env, td3, lambda_off, seed, window, max_episodes);
    rep.pairs.push_back({seed, on.variance, off.variance});
  }
  rep.median_ratio = median_ratio(rep.pairs);
  return rep;
}

}  // namespace wave::theory
