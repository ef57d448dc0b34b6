#pragma once

#include "wave/agent/lambda_schedule.hpp"
#include "wave/agent/replay_buffer.hpp"
#include "wave/envs/environment.hpp"
#include "wave/nn/adam.hpp"
#include "wave/nn/mlp.hpp"
#include "wave/ot/sinkhorn.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace wave::agent {

struct Td3Config {
  double gamma = 0.99;
  std::size_t batch_size = 256;
  double tau = 0.005;
  std::size_t policy_delay = 2;
  /// Noise scales are fractions of half the action range.
  double target_policy_noise = 0.2;
  double target_noise_clip = 0.5;
  double exploration_noise = 0.1;
  std::size_t warmup_steps = 1000;
  std::size_t buffer_capacity = 100000;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  std::vector<std::size_t> hidden_dims{256, 256, 256};
  bool use_layer_norm = true;

  void validate() const;
  bool operator==(const Td3Config&) const = default;
};

struct WaveConfig {
  /// Off means the plain TD3 baseline: no probe batches, no Sinkhorn, lambda 0.
  bool regularize = true;
  LambdaScheduleConfig schedule;
  ot::SinkhornOptions sinkhorn;
  std::size_t probe_size = 64;

  void validate() const;
  bool operator==(const WaveConfig&) const = default;
};

/// Critic-1 values on a probe batch, taken with the parameters in effect
/// before the most recent critic step.
struct QSnapshot {
  Matrix states;
  Matrix actions;
  Vector values;
};

struct CriticMetrics {
  double td_loss = 0.0;
  /// lambda * W_eps(Q_k, Q_{k-1}); 0 when the term was not evaluated.
  double w_term = 0.0;
  double lambda = 0.0;
  /// Norm of the full critic gradient (both critics, TD plus regularizer).
  double grad_norm = 0.0;
  /// Norm of the parameter change made by the Adam step.
  double update_norm = 0.0;
  bool sinkhorn_evaluated = false;
  bool sinkhorn_converged = true;
  int sinkhorn_iterations = 0;
};

struct ActorMetrics {
  double actor_loss = 0.0;
};

/// Result of a recorded critic loss, before any optimizer step.
struct CriticLoss {
  double td_loss = 0.0;
  double w_term = 0.0;
  nn::ParameterSet grad1;
  nn::ParameterSet grad2;
  std::optional<ot::SinkhornResult<double>> sinkhorn;
};

struct Networks {
  nn::MlpSpec actor_spec;
  nn::MlpSpec critic_spec;
  nn::ParameterSet actor;
  nn::ParameterSet critic1;
  nn::ParameterSet critic2;
  nn::ParameterSet actor_target;
  nn::ParameterSet critic1_target;
  nn::ParameterSet critic2_target;
};

/// Half range and midpoint of the action box as row vectors.
RowVector action_half_range(const envs::EnvSpec& spec);
RowVector action_midpoint(const envs::EnvSpec& spec);

/// Evaluates Q(s, a) without recording; returns one value per row.
Vector critic_values(const nn::MlpSpec& spec, const nn::ParameterSet& params, const Matrix& states,
                     const Matrix& actions);

/// y = r + gamma (1 - done) min(Q1'(s', a'), Q2'(s', a')) with
/// a' = clamp(pi'(s') + clip(noise, +-clip * half_range), bounds).
/// `noise` is [batch, act_dim] of pre-scaled Gaussian draws.
Vector td3_targets(const Networks& nets, const envs::EnvSpec& spec, const Td3Config& cfg, const Batch& batch,
                   const Matrix& noise);

/// TD loss of both critics plus, when lambda > 0 and a snapshot is given,
/// lambda * W_eps(Q1(probe), snapshot) spliced in through the envelope gradient.
CriticLoss critic_loss(const Networks& nets, const Batch& batch, const Vector& targets, double lambda,
                       const QSnapshot* snapshot, const ot::SinkhornOptions& sinkhorn);

/// -mean Q1(s, pi(s)) and its gradient with respect to the actor parameters.
std::pair<double, nn::ParameterSet> actor_loss(const Networks& nets, const Matrix& states);

/// TD3 agent with the optional Wasserstein critic regularizer.
///
/// Random streams for initialization, exploration, target smoothing, replay
/// sampling and probe sampling are derived from one seed and independent, so
/// switching the regularizer off leaves every other stream untouched.
class Agent {
 public:
  Agent(const envs::EnvSpec& spec, Td3Config td3, WaveConfig wave, std::uint64_t seed);

  const envs::EnvSpec& spec() const { return spec_; }
  const Td3Config& td3_config() const { return td3_; }
  const WaveConfig& wave_config() const { return wave_; }
  const Networks& networks() const { return nets_; }
  Networks& networks() { return nets_; }
  const std::optional<QSnapshot>& snapshot() const { return snapshot_; }
  std::size_t critic_updates() const { return critic_updates_; }

  /// clamp(pi(s) + N(0, (noise_scale * half_range)^2), bounds).
  Vector select_action(const Eigen::Ref<const Vector>& state, double noise_scale);
  Vector select_action(const Eigen::Ref<const Vector>& state, double noise_scale, std::mt19937_64& rng) const;
  Vector random_action();
  Vector random_action(std::mt19937_64& rng) const;

  /// One step on L_reg. `probe` supplies the next snapshot's state-action pairs
  /// and may be null when the regularizer is off.
  CriticMetrics critic_update(const Batch& batch, double lambda, const Batch* probe);
  /// One actor step on `states` followed by soft updates of all targets.
  ActorMetrics actor_update(const Matrix& states);

  /// Samples a batch (and a probe when regularizing) from `buffer`, runs a
  /// critic update and, every policy_delay updates, an actor update.
  struct UpdateResult {
    CriticMetrics critic;
    std::optional<ActorMetrics> actor;
  };
  UpdateResult update(const ReplayBuffer& buffer, double lambda);

 private:
  envs::EnvSpec spec_;
  Td3Config td3_;
  WaveConfig wave_;
  Networks nets_;
  nn::AdamState actor_opt_;
  nn::AdamState critic1_opt_;
  nn::AdamState critic2_opt_;
  std::optional<QSnapshot> snapshot_;
  std::size_t critic_updates_ = 0;
  RowVector half_range_;
  RowVector low_;
  RowVector high_;
  std::mt19937_64 explore_rng_;
  std::mt19937_64 target_rng_;
  std::mt19937_64 replay_rng_;
  std::mt19937_64 probe_rng_;
};

/// splitmix64 step, used to derive independent stream seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Random-policy mean return + 25% of the gap to the optimistic bound, using
/// 100 episodes from a fixed seed.
double auto_reward_threshold(const envs::Environment& env);

}  // namespace wave::agent
