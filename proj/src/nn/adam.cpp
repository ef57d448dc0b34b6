#include "wave/nn/adam.hpp"

#include <cmath>

namespace wave::nn {

AdamState::AdamState(const ParameterSet& params, AdamOptions opts)
    : options(opts), first_moment(params.zeros_like()), second_moment(params.zeros_like()) {}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state) {
  params.require_same_layout(grads, "adam_step gradients");
  params.require_same_layout(state.first_moment, "adam_step first moment");
  params.require_same_layout(state.second_moment, "adam_step second moment");

  const auto& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.entry(i).second.matrix().array();
    auto g = grads.entry(i).second.matrix().array();
    auto m = state.first_moment.entry(i).second.matrix().array();
    auto v = state.second_moment.entry(i).second.matrix().array();
    m = o.beta1 * m + (1.0 - o.beta1) * g;
    v = o.beta2 * v + (1.0 - o.beta2) * g.square();
    p -= o.learning_rate * (m / correction1) / ((v / correction2).sqrt() + o.epsilon);
  }
}

}  // namespace wave::nn
