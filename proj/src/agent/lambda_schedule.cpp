#include "wave/agent/lambda_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace wave::agent {

void LambdaScheduleConfig::validate() const {
  if (!(lambda_min >= 0.0)) throw std::invalid_argument("lambda_min must be >= 0");
  if (!(lambda_max >= lambda_min)) throw std::invalid_argument("lambda_max must be >= lambda_min");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("lambda_alpha must be > 0");
  if (!std::isfinite(r_threshold)) throw std::invalid_argument("r_threshold must be finite");
  if (window < 1) throw std::invalid_argument("lambda_window must be >= 1");
}

double lambda_for(const LambdaScheduleConfig& cfg, double r_bar) {
  if (r_bar <= cfg.r_threshold) return cfg.lambda_max;
  return cfg.lambda_min + (cfg.lambda_max - cfg.lambda_min) * std::exp(-cfg.alpha * (r_bar - cfg.r_threshold));
}

double moving_average_reward(std::span<const double> history, std::size_t window) {
  if (history.empty()) throw std::invalid_argument("moving_average_reward: empty history");
  if (window < 1) throw std::invalid_argument("moving_average_reward: window must be >= 1");
  const std::size_t n = std::min(window, history.size());
  const auto tail = history.last(n);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(n);
}

LambdaSchedule::LambdaSchedule(LambdaScheduleConfig cfg) : cfg_(cfg), lambda_(cfg.lambda_max) { cfg_.validate(); }

double LambdaSchedule::record(double episode_return) {
  if (!std::isfinite(episode_return)) throw std::invalid_argument("LambdaSchedule: non-finite episode return");
  history_.push_back(episode_return);
  while (history_.size() > cfg_.window) history_.pop_front();
  lambda_ = lambda_for(cfg_, moving_average());
  return lambda_;
}

double LambdaSchedule::moving_average() const {
  const std::vector<double> h(history_.begin(), history_.end());
  return moving_average_reward(h, cfg_.window);
}

double optimistic_return_bound(std::string_view env_name) {
  if (env_name == "pendulum") return -400.0;
  if (env_name == "acrobot") return -350.0;
  if (env_name == "nav2d") return -150.0;
  throw std::invalid_argument("no return bound for environment '" + std::string(env_name) + "'");
}

}  // namespace wave::agent
