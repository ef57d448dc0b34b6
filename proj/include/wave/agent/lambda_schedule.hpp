#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <string_view>

namespace wave::agent {

struct LambdaScheduleConfig {
  double lambda_max = 2.0;
  double lambda_min = 0.3;
  double alpha = 0.05;
  double r_threshold = 0.0;
  std::size_t window = 20;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const LambdaScheduleConfig&) const = default;
};

/// lambda_max when r_bar <= r_threshold, otherwise
/// lambda_min + (lambda_max - lambda_min) * exp(-alpha * (r_bar - r_threshold)).
double lambda_for(const LambdaScheduleConfig& cfg, double r_bar);

/// Mean of the last min(window, size) entries. Throws on an empty history.
double moving_average_reward(std::span<const double> history, std::size_t window);

/// Adaptive regularization weight driven by the moving-average episode return.
/// Starts at lambda_max; `record` is called once per finished episode.
class LambdaSchedule {
 public:
  explicit LambdaSchedule(LambdaScheduleConfig cfg);

  double lambda() const { return lambda_; }
  /// Appends an episode return, recomputes the moving average and lambda, and
  /// returns the new lambda.
  double record(double episode_return);
  /// Throws if no episode has been recorded.
  double moving_average() const;
  const std::deque<double>& history() const { return history_; }
  const LambdaScheduleConfig& config() const { return cfg_; }

 private:
  LambdaScheduleConfig cfg_;
  std::deque<double> history_;
  double lambda_;
};

/// Optimistic return bounds used for the automatic reward threshold:
/// pendulum -400, acrobot -350, nav2d -150.
double optimistic_return_bound(std::string_view env_name);

}  // namespace wave::agent
