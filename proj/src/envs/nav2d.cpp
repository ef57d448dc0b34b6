#include "wave/envs/environment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace wave::envs {

Nav2d::Nav2d() {
  spec_.name = "nav2d";
  spec_.observation_dim = 6;
  spec_.action_dim = 2;
  spec_.action_low = {-max_accel, -max_accel};
  spec_.action_high = {max_accel, max_accel};
  spec_.max_episode_steps = 300;
}

Vector Nav2d::observe(const Vector& p) {
  Vector obs(6);
  obs << p[0], p[1], p[2], p[3], p[4] - p[0], p[5] - p[1];
  return obs;
}

EnvState Nav2d::make_state(double x, double y, double vx, double vy, double goal_x, double goal_y) {
  EnvState s;
  s.physics = Vector(6);
  s.physics << x, y, vx, vy, goal_x, goal_y;
  s.observation = observe(s.physics);
  return s;
}

EnvState Nav2d::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0.5, arena - 0.5);
  double x, y, gx, gy;
  do {
    x = pos(rng);
    y = pos(rng);
    gx = pos(rng);
    gy = pos(rng);
  } while (std::hypot(gx - x, gy - y) < min_start_gap);
  return make_state(x, y, 0.0, 0.0, gx, gy);
}

StepResult Nav2d::step(EnvState& state, const Eigen::Ref<const Vector>& action) const {
  Vector a;
  StepResult out;
  out.action_clamped = clamp_action(spec_, action, a);

  Vector& p = state.physics;
  for (int axis = 0; axis < 2; ++axis) {
    double& pos = p[axis];
    double& vel = p[2 + axis];
    vel = std::clamp(vel + a[axis] * dt, -max_speed, max_speed);
    pos += vel * dt;
    if (pos < 0.0) {
      pos = 0.0;
      vel = std::max(vel, 0.0);
    } else if (pos > arena) {
      pos = arena;
      vel = std::min(vel, 0.0);
    }
  }

  const double distance = std::hypot(p[4] - p[0], p[5] - p[1]);
  out.reward = -0.1 * distance - 0.01 * a.squaredNorm();
  out.done = distance <= goal_radius;
  if (out.done) out.reward += goal_bonus;

  state.observation = observe(p);
  state.step += 1;
  out.next_observation = state.observation;
  out.truncated = !out.done && state.step >= spec_.max_episode_steps;
  return out;
}

}  // namespace wave::envs
