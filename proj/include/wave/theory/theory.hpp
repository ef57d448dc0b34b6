#pragma once

#include "wave/agent/trainer.hpp"
#include "wave/nn/tensor.hpp"
#include "wave/ot/sinkhorn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace wave::theory {

/// Q[s][a], states as rows.
using QTable = Matrix;

/// Finite MDP under a fixed stochastic policy. Row s * n_actions + a of
/// `transitions` is P(. | s, a).
struct TabularMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  Matrix transitions;
  Matrix rewards;
  Matrix policy;
  double gamma = 0.9;
  double r_max = 1.0;

  /// Throws std::invalid_argument on malformed shapes, rows that are not
  /// distributions (1e-12), rewards above r_max or gamma outside [0, 1).
  void validate() const;
};

/// Dirichlet(1) rows for P and pi, rewards uniform in [-1, 1].
TabularMDP random_mdp(std::size_t n_states, std::size_t n_actions, double gamma, std::uint64_t seed);

/// T Q(s, a) = r(s, a) + gamma sum_s' P(s'|s, a) sum_a' pi(a'|s') Q(s', a').
QTable bellman_operator(const TabularMDP& mdp, const QTable& q);

/// Q^pi from the linear system (I - gamma P^pi) v = r^pi.
QTable policy_evaluation(const TabularMDP& mdp);

/// Iterates the Bellman operator until successive iterates differ by at most
/// `tol` in sup norm.
QTable value_iteration(const TabularMDP& mdp, double tol, int max_iter);

/// Row-major flattening of a Q-table into one sample set.
Vector flatten_q(const QTable& q);

/// T Q - lambda * dW_eps(flat Q, flat Q_prev)/dQ, reshaped to the table.
/// lambda = 0 returns the standard operator exactly. A Sinkhorn run that does
/// not converge throws std::runtime_error.
QTable regularized_bellman_operator(const TabularMDP& mdp, const QTable& q, const QTable& q_prev, double lambda,
                                    const ot::SinkhornOptions& sinkhorn);

struct ContractionReport {
  std::string op;
  double lambda = 0.0;
  double gamma = 0.0;
  std::size_t trials = 0;
  /// max over trials of ||T q1 - T q2||_inf / ||q1 - q2||_inf.
  double measured_factor = 0.0;
  /// Same ratio with exact W1 between flattened tables.
  double measured_factor_w1 = 0.0;
};

/// Random pairs with entries uniform in +-r_max / (1 - gamma). For lambda > 0
/// the regularized operator is measured; q_prev is drawn fresh per trial and
/// shared by both applications.
ContractionReport measure_contraction(const TabularMDP& mdp, double lambda, std::size_t trials,
                                      std::uint64_t seed, const ot::SinkhornOptions& sinkhorn);

/// Least-squares c in f_lambda = f_0 (1 - c lambda), where f_0 is the
/// standard operator's factor measured on the same pairs:
/// c = sum lambda (1 - f / f_0) / sum lambda^2.
double fit_contraction_constant(const ContractionReport& standard, const std::vector<ContractionReport>& regularized);

struct RatePoint {
  std::size_t k = 0;
  double mse = 0.0;
  double bound = 0.0;
};

struct ConvergenceConfig {
  double a = 1.0;
  double m = 1.0;
  double G = 1.0;
  std::size_t dim = 10;
  std::size_t k_max = 100000;
  std::size_t seeds = 20;
  std::uint64_t seed = 0;
  /// Start of the slope fit; the fit runs over [fit_from, k_max].
  std::size_t fit_from = 100;
  /// Logged points per decade of k.
  std::size_t points_per_decade = 20;
  bool operator==(const ConvergenceConfig&) const = default;
};

struct ConvergenceReport {
  ConvergenceConfig config;
  std::vector<RatePoint> curve;
  double fitted_slope = 0.0;
  /// mse ~ fitted_C * k^fitted_slope over the fit range.
  double fitted_C = 0.0;
  bool bound_holds = true;
  bool monotone = true;
};

/// Logged k values: 1, k_max and points_per_decade log-spaced integers per decade.
std::vector<std::size_t> log_spaced_ks(std::size_t k_max, std::size_t points_per_decade);

/// phi_{k+1} = (1 - 2am/k) phi_k + a^2 G^2 / k^2 from phi_1, returned for
/// k = 1..k_max (index k - 1).
std::vector<double> recursion_bound(double a, double m, double G, double phi1, std::size_t k_max);

/// Projected SGD with step a/k on f(theta) = m/2 ||theta - theta*||^2.
/// Gradient noise has norm exactly G/2 in a uniform direction; iterates are
/// projected onto the ball of radius G/(2m) around theta*, so the stochastic
/// gradient norm never exceeds G. Starts on that sphere. With G = 0 the
/// radius is 1 and the run is noiseless.
ConvergenceReport convergence_rate_experiment(const ConvergenceConfig& cfg);

/// Least-squares slope and intercept of log mse against log k over [from, to].
std::pair<double, double> loglog_fit(const std::vector<RatePoint>& curve, std::size_t from, std::size_t to);

struct VarianceWindow {
  std::size_t first_update = 5000;
  std::size_t last_update = 20000;
  bool operator==(const VarianceWindow&) const = default;
};

/// Sample variance (n - 1 denominator); 0 for fewer than two values.
double sample_variance(const std::vector<double>& values);

struct ArmRun {
  std::uint64_t seed = 0;
  double variance = 0.0;
  std::size_t samples = 0;
  std::vector<agent::EpisodeLog> logs;
};

/// Trains one seed until critic update `window.last_update` has happened and
/// `keep_going(logs)` (if given) returns false, or `max_episodes` is reached.
/// Collects critic update norms inside the window.
ArmRun run_variance_arm(const envs::Environment& env, const agent::Td3Config& td3, const agent::WaveConfig& wave,
                        std::uint64_t seed, const VarianceWindow& window, std::size_t max_episodes,
                        const std::function<bool(const std::vector<agent::EpisodeLog>&)>& keep_going = {});

struct VariancePair {
  std::uint64_t seed = 0;
  double var_on = 0.0;
  double var_off = 0.0;
};

struct VarianceReport {
  VarianceWindow window;
  std::vector<VariancePair> pairs;
  double median_ratio = 0.0;
};

/// Median of var_on / var_off over seeds.
double median_ratio(const std::vector<VariancePair>& pairs);

VarianceReport variance_experiment(const envs::Environment& env, const std::vector<std::uint64_t>& seeds,
                                   const VarianceWindow& window, const agent::Td3Config& td3,
                                   const agent::WaveConfig& lambda_on, const agent::WaveConfig& lambda_off,
                                   std::size_t max_episodes);

}  // namespace wave::theory
