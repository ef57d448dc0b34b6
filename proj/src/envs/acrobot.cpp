#include "wave/envs/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace wave::envs {

Acrobot::Acrobot() {
  spec_.name = "acrobot";
  spec_.observation_dim = 6;
  spec_.action_dim = 1;
  spec_.action_low = {-max_torque};
  spec_.action_high = {max_torque};
  spec_.max_episode_steps = 500;
}

Vector Acrobot::observe(const Vector& p) {
  Vector obs(6);
  obs << std::cos(p[0]), std::sin(p[0]), std::cos(p[1]), std::sin(p[1]), p[2], p[3];
  return obs;
}

EnvState Acrobot::make_state(double theta1, double theta2, double dtheta1, double dtheta2) {
  EnvState s;
  s.physics = Vector(4);
  s.physics << wrap_angle(theta1), wrap_angle(theta2), dtheta1, dtheta2;
  s.observation = observe(s.physics);
  return s;
}

EnvState Acrobot::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  const double t1 = u(rng), t2 = u(rng), d1 = u(rng), d2 = u(rng);
  return make_state(t1, t2, d1, d2);
}

// Two-link dynamics from Sutton & Barto's acrobot, torque on joint 2.
Eigen::Vector2d Acrobot::accelerations(const Vector& p, double torque) {
  const double m1 = link_mass, m2 = link_mass, l1 = link_length;
  const double lc1 = link_com, lc2 = link_com, i1 = link_moi, i2 = link_moi, g = gravity;
  const double theta1 = p[0], theta2 = p[1], dtheta1 = p[2], dtheta2 = p[3];
  const double half_pi = std::numbers::pi / 2.0;

  const double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - half_pi);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - half_pi) + phi2;
  const double ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
                          (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {ddtheta1, ddtheta2};
}

bool Acrobot::at_goal(const Vector& p) { return -std::cos(p[0]) - std::cos(p[1] + p[0]) > 1.0; }

StepResult Acrobot::step(EnvState& state, const Eigen::Ref<const Vector>& action) const {
  Vector u;
  StepResult out;
  out.action_clamped = clamp_action(spec_, action, u);

  Vector& p = state.physics;
  const double h = dt / substeps;
  for (int k = 0; k < substeps; ++k) {
    const Eigen::Vector2d acc = accelerations(p, u[0]);
    p[2] = std::clamp(p[2] + h * acc[0], -max_vel1, max_vel1);
    p[3] = std::clamp(p[3] + h * acc[1], -max_vel2, max_vel2);
    p[0] = wrap_angle(p[0] + h * p[2]);
    p[1] = wrap_angle(p[1] + h * p[3]);
  }

  state.observation = observe(p);
  state.step += 1;
  out.next_observation = state.observation;
  out.done = at_goal(p);
  out.reward = out.done ? 0.0 : -1.0;
  out.truncated = !out.done && state.step >= spec_.max_episode_steps;
  return out;
}

}  // namespace wave::envs
