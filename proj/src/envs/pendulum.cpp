#include "wave/envs/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace wave::envs {

Pendulum::Pendulum() {
  spec_.name = "pendulum";
  spec_.observation_dim = 3;
  spec_.action_dim = 1;
  spec_.action_low = {-max_torque};
  spec_.action_high = {max_torque};
  spec_.max_episode_steps = 200;
}

Vector Pendulum::observe(double theta, double theta_dot) {
  Vector obs(3);
  obs << std::cos(theta), std::sin(theta), theta_dot;
  return obs;
}

EnvState Pendulum::make_state(double theta, double theta_dot) {
  EnvState s;
  s.physics = Vector(2);
  s.physics << wrap_angle(theta), theta_dot;
  s.observation = observe(s.physics[0], s.physics[1]);
  return s;
}

EnvState Pendulum::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  const double theta = angle(rng);
  return make_state(theta, speed(rng));
}

StepResult Pendulum::step(EnvState& state, const Eigen::Ref<const Vector>& action) const {
  Vector u;
  StepResult out;
  out.action_clamped = clamp_action(spec_, action, u);
  const double torque = u[0];
  const double theta = state.physics[0];
  const double theta_dot = state.physics[1];

  out.reward = -(theta * theta + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque);

  const double accel = 3.0 * gravity / (2.0 * length) * std::sin(theta) + 3.0 / (mass * length * length) * torque;
  const double new_theta_dot = std::clamp(theta_dot + accel * dt, -max_speed, max_speed);
  const double new_theta = wrap_angle(theta + new_theta_dot * dt);

  state.physics << new_theta, new_theta_dot;
  state.observation = observe(new_theta, new_theta_dot);
  state.step += 1;
  out.next_observation = state.observation;
  out.truncated = state.step >= spec_.max_episode_steps;
  return out;
}

}  // namespace wave::envs
