#pragma once

#include "wave/nn/parameters.hpp"

#include <cstdint>

namespace wave::nn {

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Optimizer state; moment sets mirror the parameter layout.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  ParameterSet first_moment;
  ParameterSet second_moment;

  AdamState() = default;
  AdamState(const ParameterSet& params, AdamOptions opts);
};

/// One bias-corrected Adam descent step. Throws on layout mismatch.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state);

}  // namespace wave::nn
