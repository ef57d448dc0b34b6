#include "wave/envs/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace wave::envs {

double wrap_angle(double angle) {
  const double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(angle + std::numbers::pi, two_pi);
  if (wrapped < 0.0) wrapped += two_pi;
  wrapped -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (wrapped >= std::numbers::pi) wrapped -= two_pi;
  return wrapped;
}

bool clamp_action(const EnvSpec& spec, const Eigen::Ref<const Vector>& action, Vector& out) {
  if (static_cast<std::size_t>(action.size()) != spec.action_dim) {
    throw std::invalid_argument(spec.name + ": action has " + std::to_string(action.size()) + " entries, expected " +
                                std::to_string(spec.action_dim));
  }
  if (!action.allFinite()) throw NumericError(spec.name + ": non-finite action");
  out.resize(action.size());
  bool clamped = false;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    out[i] = std::clamp(action[i], spec.action_low[i], spec.action_high[i]);
    clamped = clamped || out[i] != action[i];
  }
  return clamped;
}

std::unique_ptr<Environment> make_environment(std::string_view name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "acrobot") return std::make_unique<Acrobot>();
  if (name == "nav2d") return std::make_unique<Nav2d>();
  throw std::invalid_argument("unknown environment '" + std::string(name) + "' (expected pendulum, acrobot or nav2d)");
}

const std::vector<std::string>& environment_names() {
  static const std::vector<std::string> names{"pendulum", "acrobot", "nav2d"};
  return names;
}

double random_policy_baseline(const Environment& env, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("random_policy_baseline: episodes must be >= 1");
  const auto& spec = env.spec();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector action(spec.action_dim);
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    EnvState state = env.reset(rng());
    double ret = 0.0;
    for (;;) {
      for (std::size_t i = 0; i < spec.action_dim; ++i) {
        action[i] = spec.action_low[i] + (spec.action_high[i] - spec.action_low[i]) * unit(rng);
      }
      const StepResult r = env.step(state, action);
      ret += r.reward;
      if (r.done || r.truncated) break;
    }
    total += ret;
  }
  return total / episodes;
}

}  // namespace wave::envs
