#include "wave/agent/trainer.hpp"

#include "wave/io.hpp"

#include <chrono>

namespace wave::agent {

namespace {

constexpr std::uint64_t kEpisodeStream = 6;
constexpr std::uint64_t kBufferStream = 7;

}  // namespace

std::string episode_csv_row(const EpisodeLog& log) {
  std::string s = std::to_string(log.episode) + "," + std::to_string(log.env_steps);
  for (double v : {log.episode_return, log.moving_avg_return, log.lambda, log.mean_td_loss, log.mean_w_term,
                   log.mean_critic_grad_norm, log.mean_actor_loss, log.wall_ms}) {
    s += "," + format_double(v);
  }
  return s;
}

Trainer::Trainer(const envs::Environment& env, Td3Config td3, WaveConfig wave, std::uint64_t seed)
    : env_(env),
      agent_(env.spec(), std::move(td3), std::move(wave), seed),
      buffer_(agent_.td3_config().buffer_capacity, env.spec().observation_dim, env.spec().action_dim,
              derive_seed(seed, kBufferStream)),
      schedule_(agent_.wave_config().schedule),
      episode_rng_(derive_seed(seed, kEpisodeStream)) {}

double Trainer::current_lambda() const { return agent_.wave_config().regularize ? schedule_.lambda() : 0.0; }

EpisodeLog Trainer::run_episode() {
  const auto start = std::chrono::steady_clock::now();
  const auto& td3 = agent_.td3_config();
  const double lambda = current_lambda();
  envs::EnvState state = env_.reset(episode_rng_());
  EpisodeLog log;
  log.episode = ++episodes_;
  log.lambda = lambda;
  std::size_t critic_count = 0;
  std::size_t actor_count = 0;
  for (;;) {
    const Vector action = env_steps_ < td3.warmup_steps ? agent_.random_action()
                                                        : agent_.select_action(state.observation, td3.exploration_noise);
    const Vector obs = state.observation;
    const envs::StepResult r = env_.step(state, action);
    ++env_steps_;
    log.episode_return += r.reward;
    buffer_.add({obs, action, r.reward, r.next_observation, r.done});
    if (on_step_) on_step_(env_steps_, obs, action, r.reward, r.done);

    if (env_steps_ >= td3.warmup_steps && buffer_.size() >= td3.batch_size) {
      const auto u = agent_.update(buffer_, lambda);
      ++stats_.critic_updates;
      ++critic_count;
      log.mean_td_loss += u.critic.td_loss;
      log.mean_w_term += u.critic.w_term;
      log.mean_critic_grad_norm += u.critic.grad_norm;
      if (u.critic.sinkhorn_evaluated) {
        ++stats_.sinkhorn_calls;
        if (!u.critic.sinkhorn_converged) ++stats_.sinkhorn_unconverged;
      }
      if (u.actor) {
        ++actor_count;
        log.mean_actor_loss += u.actor->actor_loss;
      }
      if (on_update_) {
        on_update_({agent_.critic_updates(), env_steps_, &u.critic, u.actor ? &*u.actor : nullptr, &agent_});
      }
    }
    if (r.done || r.truncated) break;
  }
  if (critic_count > 0) {
    const auto n = static_cast<double>(critic_count);
    log.mean_td_loss /= n;
    log.mean_w_term /= n;
    log.mean_critic_grad_norm /= n;
  }
  if (actor_count > 0) log.mean_actor_loss /= static_cast<double>(actor_count);
  log.env_steps = env_steps_;
  schedule_.record(log.episode_return);
  log.moving_avg_return = schedule_.moving_average();
  if (log_wall_time_) {
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return log;
}

std::vector<EpisodeLog> Trainer::run(const TrainOptions& options) {
  if (options.on_update) on_update_ = options.on_update;
  if (options.on_step) on_step_ = options.on_step;
  log_wall_time_ = options.log_wall_time;
  std::vector<EpisodeLog> logs;
  logs.reserve(options.episodes);
  for (std::size_t e = 0; e < options.episodes; ++e) {
    logs.push_back(run_episode());
    if (options.should_stop && options.should_stop(logs.back())) break;
  }
  return logs;
}

std::vector<EpisodeLog> train(const envs::Environment& env, const Td3Config& td3, const WaveConfig& wave,
                              const TrainOptions& options) {
  Trainer trainer(env, td3, wave, options.seed);
  return trainer.run(options);
}

}  // namespace wave::agent
