#pragma once

#include "wave/nn/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace wave::envs {

struct EnvSpec {
  std::string name;
  std::size_t observation_dim = 0;
  std::size_t action_dim = 0;
  std::vector<double> action_low;
  std::vector<double> action_high;
  int max_episode_steps = 0;
};

/// Everything needed to continue an episode. `physics` is environment
/// specific; angles inside it are kept in [-pi, pi).
struct EnvState {
  Vector observation;
  Vector physics;
  int step = 0;
};

struct StepResult {
  Vector next_observation;
  double reward = 0.0;
  /// Task termination (goal reached).
  bool done = false;
  /// Horizon reached without termination.
  bool truncated = false;
  /// The action was outside the box and has been clamped.
  bool action_clamped = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  /// Deterministic in `seed`.
  virtual EnvState reset(std::uint64_t seed) const = 0;
  /// Advances `state` by one control step. Out-of-box actions are clamped;
  /// non-finite actions throw NumericError.
  virtual StepResult step(EnvState& state, const Eigen::Ref<const Vector>& action) const = 0;
};

/// `pendulum`, `acrobot` or `nav2d`; anything else throws std::invalid_argument.
std::unique_ptr<Environment> make_environment(std::string_view name);
const std::vector<std::string>& environment_names();

/// Mean undiscounted return of uniformly random actions over `episodes`
/// episodes. Deterministic in `seed`.
double random_policy_baseline(const Environment& env, int episodes, std::uint64_t seed);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double angle);

/// Clamps `action` into the spec's box; returns whether anything moved.
bool clamp_action(const EnvSpec& spec, const Eigen::Ref<const Vector>& action, Vector& out);

// Concrete environments, exposed for tests that drive the physics directly.

class Pendulum final : public Environment {
 public:
  static constexpr double gravity = 10.0;
  static constexpr double mass = 1.0;
  static constexpr double length = 1.0;
  static constexpr double dt = 0.05;
  static constexpr double max_speed = 8.0;
  static constexpr double max_torque = 2.0;

  Pendulum();
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) const override;
  StepResult step(EnvState& state, const Eigen::Ref<const Vector>& action) const override;

  /// State with angle `theta` (0 = upright) and angular velocity `theta_dot`.
  static EnvState make_state(double theta, double theta_dot);
  static Vector observe(double theta, double theta_dot);

 private:
  EnvSpec spec_;
};

class Acrobot final : public Environment {
 public:
  static constexpr double link_mass = 1.0;
  static constexpr double link_length = 1.0;
  static constexpr double link_com = 0.5;
  static constexpr double link_moi = 1.0;
  static constexpr double gravity = 9.8;
  static constexpr double dt = 0.2;
  static constexpr int substeps = 4;
  static constexpr double max_vel1 = 4.0 * 3.14159265358979323846;
  static constexpr double max_vel2 = 9.0 * 3.14159265358979323846;
  static constexpr double max_torque = 1.0;

  Acrobot();
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) const override;
  StepResult step(EnvState& state, const Eigen::Ref<const Vector>& action) const override;

  /// physics = (theta1, theta2, dtheta1, dtheta2); theta1 = 0 hangs down.
  static EnvState make_state(double theta1, double theta2, double dtheta1, double dtheta2);
  static Vector observe(const Vector& physics);
  /// Angular accelerations for torque `torque` on the second joint.
  static Eigen::Vector2d accelerations(const Vector& physics, double torque);
  static bool at_goal(const Vector& physics);

 private:
  EnvSpec spec_;
};

class Nav2d final : public Environment {
 public:
  static constexpr double arena = 10.0;
  static constexpr double dt = 0.1;
  static constexpr double max_speed = 2.0;
  static constexpr double max_accel = 1.0;
  static constexpr double goal_radius = 0.3;
  static constexpr double goal_bonus = 10.0;
  static constexpr double min_start_gap = 0.5;

  Nav2d();
  const EnvSpec& spec() const override { return spec_; }
  EnvState reset(std::uint64_t seed) const override;
  StepResult step(EnvState& state, const Eigen::Ref<const Vector>& action) const override;

  /// physics = (x, y, vx, vy, goal_x, goal_y).
  static EnvState make_state(double x, double y, double vx, double vy, double goal_x, double goal_y);
  static Vector observe(const Vector& physics);

 private:
  EnvSpec spec_;
};

}  // namespace wave::envs
