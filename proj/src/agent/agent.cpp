#include "wave/agent/agent.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wave::agent {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kExploreStream = 2;
constexpr std::uint64_t kTargetStream = 3;
constexpr std::uint64_t kReplayStream = 4;
constexpr std::uint64_t kProbeStream = 5;

Matrix concat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

double parameter_distance(const nn::ParameterSet& a, const nn::ParameterSet& b) {
  return (a.flatten() - b.flatten()).norm();
}

Vector first_column(const Matrix& m) { return m.col(0); }

}  // namespace

void Td3Config::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in (0, 1]");
  if (policy_delay < 1) throw std::invalid_argument("policy_delay must be >= 1");
  if (!(target_policy_noise >= 0.0)) throw std::invalid_argument("target_policy_noise must be >= 0");
  if (!(target_noise_clip >= 0.0)) throw std::invalid_argument("target_noise_clip must be >= 0");
  if (!(exploration_noise >= 0.0)) throw std::invalid_argument("exploration_noise must be >= 0");
  if (buffer_capacity < 1) throw std::invalid_argument("buffer_capacity must be >= 1");
  if (!(actor_lr > 0.0)) throw std::invalid_argument("actor_lr must be > 0");
  if (!(critic_lr > 0.0)) throw std::invalid_argument("critic_lr must be > 0");
  for (auto h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("hidden_dims entries must be >= 1");
  }
}

void WaveConfig::validate() const {
  schedule.validate();
  if (!(sinkhorn.epsilon > 0.0)) throw std::invalid_argument("sinkhorn_epsilon must be > 0");
  if (sinkhorn.max_iter < 1) throw std::invalid_argument("sinkhorn_max_iter must be >= 1");
  if (!(sinkhorn.tol > 0.0)) throw std::invalid_argument("sinkhorn_tol must be > 0");
  if (probe_size < 1) throw std::invalid_argument("probe_size must be >= 1");
}

RowVector action_half_range(const envs::EnvSpec& spec) {
  RowVector r(static_cast<Eigen::Index>(spec.action_dim));
  for (std::size_t i = 0; i < spec.action_dim; ++i) {
    r[static_cast<Eigen::Index>(i)] = 0.5 * (spec.action_high[i] - spec.action_low[i]);
  }
  return r;
}

RowVector action_midpoint(const envs::EnvSpec& spec) {
  RowVector r(static_cast<Eigen::Index>(spec.action_dim));
  for (std::size_t i = 0; i < spec.action_dim; ++i) {
    r[static_cast<Eigen::Index>(i)] = 0.5 * (spec.action_high[i] + spec.action_low[i]);
  }
  return r;
}

Vector critic_values(const nn::MlpSpec& spec, const nn::ParameterSet& params, const Matrix& states,
                     const Matrix& actions) {
  return first_column(nn::forward(spec, params, concat(states, actions)));
}

Vector td3_targets(const Networks& nets, const envs::EnvSpec& spec, const Td3Config& cfg, const Batch& batch,
                   const Matrix& noise) {
  const auto n = batch.size();
  if (noise.rows() != n || noise.cols() != static_cast<Eigen::Index>(spec.action_dim)) {
    throw std::invalid_argument("td3_targets: noise must be [batch, action_dim]");
  }
  if (batch.rewards.size() != n || batch.dones.size() != n || batch.next_states.rows() != n) {
    throw std::invalid_argument("td3_targets: inconsistent batch");
  }
  const RowVector half = action_half_range(spec);
  Matrix next_actions = nn::forward(nets.actor_spec, nets.actor_target, batch.next_states);
  for (Eigen::Index j = 0; j < next_actions.cols(); ++j) {
    const double c = cfg.target_noise_clip * half[j];
    const auto lo = spec.action_low[static_cast<std::size_t>(j)];
    const auto hi = spec.action_high[static_cast<std::size_t>(j)];
    next_actions.col(j) =
        (next_actions.col(j).array() + noise.col(j).array().max(-c).min(c)).max(lo).min(hi).matrix();
  }
  const Vector q1 = critic_values(nets.critic_spec, nets.critic1_target, batch.next_states, next_actions);
  const Vector q2 = critic_values(nets.critic_spec, nets.critic2_target, batch.next_states, next_actions);
  return (batch.rewards.array() + cfg.gamma * (1.0 - batch.dones.array()) * q1.array().min(q2.array())).matrix();
}

CriticLoss critic_loss(const Networks& nets, const Batch& batch, const Vector& targets, double lambda,
                       const QSnapshot* snapshot, const ot::SinkhornOptions& sinkhorn) {
  if (targets.size() != batch.size()) throw std::invalid_argument("critic_loss: targets do not match the batch");
  nn::Tape tape;
  const auto p1 = nn::bind(tape, nets.critic1, true, "q1.");
  const auto p2 = nn::bind(tape, nets.critic2, true, "q2.");
  const nn::Var input = tape.constant(concat(batch.states, batch.actions));
  const nn::Var y = tape.constant(targets);
  const nn::Var q1 = nn::forward(nets.critic_spec, p1, input);
  const nn::Var q2 = nn::forward(nets.critic_spec, p2, input);
  const nn::Var td = nn::add(nn::mean_square(nn::sub(q1, y)), nn::mean_square(nn::sub(q2, y)));

  CriticLoss out;
  out.td_loss = td.value()(0, 0);
  nn::Var loss = td;
  if (lambda > 0.0 && snapshot != nullptr) {
    const nn::Var probe = tape.constant(concat(snapshot->states, snapshot->actions));
    const nn::Var q_hat = nn::forward(nets.critic_spec, p1, probe);
    const ot::EmpiricalDistribution<double> current(Vector(q_hat.value().col(0)));
    const ot::EmpiricalDistribution<double> previous(snapshot->values);
    auto result = ot::sinkhorn_distance(current, previous, sinkhorn);
    const Vector g = ot::sinkhorn_gradient_unchecked(result, current, previous);
    out.w_term = lambda * result.distance;
    loss = nn::add(loss, nn::external_scalar(q_hat, out.w_term, lambda * Matrix(g)));
    out.sinkhorn = std::move(result);
  }
  if (!std::isfinite(loss.value()(0, 0))) throw NumericError("critic loss is not finite");
  const nn::ParameterSet grads = tape.backward(loss);
  for (const auto& [name, t] : grads) {
    if (name.starts_with("q1.")) {
      out.grad1.add(name.substr(3), t);
    } else {
      out.grad2.add(name.substr(3), t);
    }
  }
  return out;
}

std::pair<double, nn::ParameterSet> actor_loss(const Networks& nets, const Matrix& states) {
  nn::Tape tape;
  const auto pa = nn::bind(tape, nets.actor, true);
  const auto pq = nn::bind(tape, nets.critic1, false, "q1.");
  const nn::Var s = tape.constant(states);
  const nn::Var a = nn::forward(nets.actor_spec, pa, s);
  const nn::Var q = nn::forward(nets.critic_spec, pq, nn::concat_cols(s, a));
  const nn::Var loss = nn::scale(nn::mean(q), -1.0);
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) throw NumericError("actor loss is not finite");
  return {value, tape.backward(loss)};
}

Agent::Agent(const envs::EnvSpec& spec, Td3Config td3, WaveConfig wave, std::uint64_t seed)
    : spec_(spec),
      td3_(std::move(td3)),
      wave_(std::move(wave)),
      half_range_(action_half_range(spec)),
      explore_rng_(derive_seed(seed, kExploreStream)),
      target_rng_(derive_seed(seed, kTargetStream)),
      replay_rng_(derive_seed(seed, kReplayStream)),
      probe_rng_(derive_seed(seed, kProbeStream)) {
  td3_.validate();
  wave_.validate();
  low_ = Eigen::Map<const RowVector>(spec_.action_low.data(), static_cast<Eigen::Index>(spec_.action_dim));
  high_ = Eigen::Map<const RowVector>(spec_.action_high.data(), static_cast<Eigen::Index>(spec_.action_dim));
  nets_.actor_spec = nn::actor_spec(spec_.observation_dim, spec_.action_low, spec_.action_high, td3_.hidden_dims);
  nets_.critic_spec = nn::critic_spec(spec_.observation_dim, spec_.action_dim, td3_.hidden_dims);
  nets_.actor_spec.use_layer_norm = td3_.use_layer_norm;
  nets_.critic_spec.use_layer_norm = td3_.use_layer_norm;
  std::mt19937_64 init(derive_seed(seed, kInitStream));
  nets_.actor = nn::init_parameters(nets_.actor_spec, init);
  nets_.critic1 = nn::init_parameters(nets_.critic_spec, init);
  nets_.critic2 = nn::init_parameters(nets_.critic_spec, init);
  nets_.actor_target = nets_.actor;
  nets_.critic1_target = nets_.critic1;
  nets_.critic2_target = nets_.critic2;
  actor_opt_ = nn::AdamState(nets_.actor, {.learning_rate = td3_.actor_lr});
  critic1_opt_ = nn::AdamState(nets_.critic1, {.learning_rate = td3_.critic_lr});
  critic2_opt_ = nn::AdamState(nets_.critic2, {.learning_rate = td3_.critic_lr});
}

Vector Agent::select_action(const Eigen::Ref<const Vector>& state, double noise_scale) {
  return select_action(state, noise_scale, explore_rng_);
}

Vector Agent::select_action(const Eigen::Ref<const Vector>& state, double noise_scale, std::mt19937_64& rng) const {
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("select_action: noise_scale must be >= 0");
  const Matrix out = nn::forward(nets_.actor_spec, nets_.actor, Matrix(state.transpose()));
  if (!out.allFinite()) throw NumericError("actor produced a non-finite action");
  RowVector a = out.row(0);
  if (noise_scale > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < a.size(); ++j) a[j] += noise_scale * half_range_[j] * normal(rng);
    a = a.cwiseMax(low_).cwiseMin(high_);
  }
  return a.transpose();
}

Vector Agent::random_action() { return random_action(explore_rng_); }

Vector Agent::random_action(std::mt19937_64& rng) const {
  Vector a(static_cast<Eigen::Index>(spec_.action_dim));
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    a[j] = std::uniform_real_distribution<double>(low_[j], high_[j])(rng);
  }
  return a;
}

CriticMetrics Agent::critic_update(const Batch& batch, double lambda, const Batch* probe) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("critic_update: lambda must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix noise(batch.size(), static_cast<Eigen::Index>(spec_.action_dim));
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    for (Eigen::Index j = 0; j < noise.cols(); ++j) {
      noise(i, j) = td3_.target_policy_noise * half_range_[j] * normal(target_rng_);
    }
  }
  const Vector y = td3_targets(nets_, spec_, td3_, batch, noise);
  const bool regularize = wave_.regularize && lambda > 0.0;
  CriticLoss loss = critic_loss(nets_, batch, y, regularize ? lambda : 0.0, snapshot_ ? &*snapshot_ : nullptr,
                                wave_.sinkhorn);

  CriticMetrics m;
  m.td_loss = loss.td_loss;
  m.w_term = loss.w_term;
  m.lambda = wave_.regularize ? lambda : 0.0;
  m.grad_norm = std::sqrt(loss.grad1.squared_norm() + loss.grad2.squared_norm());
  if (loss.sinkhorn) {
    m.sinkhorn_evaluated = true;
    m.sinkhorn_converged = loss.sinkhorn->converged;
    m.sinkhorn_iterations = loss.sinkhorn->iterations;
  }

  if (wave_.regularize && probe != nullptr) {
    QSnapshot next;
    next.states = probe->states;
    next.actions = probe->actions;
    next.values = critic_values(nets_.critic_spec, nets_.critic1, next.states, next.actions);
    snapshot_ = std::move(next);
  }

  const nn::ParameterSet before1 = nets_.critic1;
  const nn::ParameterSet before2 = nets_.critic2;
  nn::adam_step(nets_.critic1, loss.grad1, critic1_opt_);
  nn::adam_step(nets_.critic2, loss.grad2, critic2_opt_);
  if (!nets_.critic1.all_finite() || !nets_.critic2.all_finite()) {
    throw NumericError("critic parameters became non-finite at update " + std::to_string(critic_updates_));
  }
  const double d1 = parameter_distance(nets_.critic1, before1);
  const double d2 = parameter_distance(nets_.critic2, before2);
  m.update_norm = std::sqrt(d1 * d1 + d2 * d2);
  ++critic_updates_;
  return m;
}

ActorMetrics Agent::actor_update(const Matrix& states) {
  auto [value, grads] = actor_loss(nets_, states);
  nn::adam_step(nets_.actor, grads, actor_opt_);
  if (!nets_.actor.all_finite()) throw NumericError("actor parameters became non-finite");
  nn::soft_update_in_place(nets_.actor_target, nets_.actor, td3_.tau);
  nn::soft_update_in_place(nets_.critic1_target, nets_.critic1, td3_.tau);
  nn::soft_update_in_place(nets_.critic2_target, nets_.critic2, td3_.tau);
  return {value};
}

Agent::UpdateResult Agent::update(const ReplayBuffer& buffer, double lambda) {
  const Batch batch = buffer.gather(buffer.sample_indices(td3_.batch_size, replay_rng_));
  UpdateResult r;
  if (wave_.regularize) {
    const Batch probe = buffer.gather(buffer.sample_indices(wave_.probe_size, probe_rng_));
    r.critic = critic_update(batch, lambda, &probe);
  } else {
    r.critic = critic_update(batch, lambda, nullptr);
  }
  if (critic_updates_ % td3_.policy_delay == 0) r.actor = actor_update(batch.states);
  return r;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double auto_reward_threshold(const envs::Environment& env) {
  const double baseline = envs::random_policy_baseline(env, 100, 20240101);
  const double bound = optimistic_return_bound(env.spec().name);
  return baseline + 0.25 * (bound - baseline);
}

}  // namespace wave::agent
