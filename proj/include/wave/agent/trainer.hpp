#pragma once

#include "wave/agent/agent.hpp"

#include <functional>
#include <string>
#include <vector>

namespace wave::agent {

/// One CSV row per finished episode. `lambda` is the value in effect while
/// the episode ran; means are over the updates made during the episode and 0
/// when there were none.
struct EpisodeLog {
  std::size_t episode = 0;
  std::size_t env_steps = 0;
  double episode_return = 0.0;
  double moving_avg_return = 0.0;
  double lambda = 0.0;
  double mean_td_loss = 0.0;
  double mean_w_term = 0.0;
  double mean_critic_grad_norm = 0.0;
  double mean_actor_loss = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kEpisodeCsvHeader =
    "episode,env_steps,return,moving_avg_return,lambda,mean_td_loss,mean_w_term,mean_critic_grad_norm,"
    "mean_actor_loss,wall_ms";

std::string episode_csv_row(const EpisodeLog& log);

struct UpdateEvent {
  std::size_t update = 0;
  std::size_t env_steps = 0;
  const CriticMetrics* critic = nullptr;
  const ActorMetrics* actor = nullptr;
  const Agent* agent = nullptr;
};

struct TrainOptions {
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  /// wall_ms stays 0 unless set, which keeps logs byte-reproducible.
  bool log_wall_time = false;
  std::function<void(const UpdateEvent&)> on_update;
  std::function<void(std::size_t env_steps, const Vector& obs, const Vector& action, double reward, bool done)>
      on_step;
  /// Checked after every episode; returning true ends training early.
  std::function<bool(const EpisodeLog&)> should_stop;
};

struct TrainStats {
  std::size_t critic_updates = 0;
  std::size_t sinkhorn_calls = 0;
  std::size_t sinkhorn_unconverged = 0;
};

/// Algorithm 1: collect with exploration noise (uniform actions during
/// warmup), one critic update per environment step once warmup has passed and
/// the buffer holds a batch, lambda adjusted at episode boundaries.
class Trainer {
 public:
  Trainer(const envs::Environment& env, Td3Config td3, WaveConfig wave, std::uint64_t seed);

  EpisodeLog run_episode();
  std::vector<EpisodeLog> run(const TrainOptions& options);

  const Agent& agent() const { return agent_; }
  Agent& agent() { return agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const LambdaSchedule& schedule() const { return schedule_; }
  const TrainStats& stats() const { return stats_; }
  std::size_t env_steps() const { return env_steps_; }
  double current_lambda() const;

  void set_update_observer(std::function<void(const UpdateEvent&)> f) { on_update_ = std::move(f); }
  void set_step_observer(decltype(TrainOptions::on_step) f) { on_step_ = std::move(f); }
  void set_log_wall_time(bool on) { log_wall_time_ = on; }

 private:
  const envs::Environment& env_;
  Agent agent_;
  ReplayBuffer buffer_;
  LambdaSchedule schedule_;
  std::mt19937_64 episode_rng_;
  std::size_t episodes_ = 0;
  std::size_t env_steps_ = 0;
  TrainStats stats_;
  bool log_wall_time_ = false;
  std::function<void(const UpdateEvent&)> on_update_;
  decltype(TrainOptions::on_step) on_step_;
};

/// Convenience wrapper: builds a Trainer and runs `options.episodes` episodes.
std::vector<EpisodeLog> train(const envs::Environment& env, const Td3Config& td3, const WaveConfig& wave,
                              const TrainOptions& options);

}  // namespace wave::agent
