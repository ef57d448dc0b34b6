#pragma once

#include "wave/nn/parameters.hpp"
#include "wave/nn/tape.hpp"

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace wave::nn {

enum class Activation { identity, relu, tanh };

/// Fully connected network layout.
///
/// Hidden layers are affine -> layer norm (optional) -> activation. The output
/// layer is affine followed by `output_activation`; a tanh head is rescaled
/// column-wise onto [output_low, output_high].
struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims{256, 256, 256};
  std::size_t output_dim = 1;
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;
  bool use_layer_norm = true;
  std::vector<double> output_low;
  std::vector<double> output_high;

  /// Throws std::invalid_argument if any dimension is zero or the output
  /// bounds are malformed.
  void validate() const;
};

/// Spec for a critic Q(s, a): identity head with a single output.
MlpSpec critic_spec(std::size_t obs_dim, std::size_t act_dim, std::vector<std::size_t> hidden = {256, 256, 256});
/// Spec for a deterministic actor with a tanh head scaled to the action box.
MlpSpec actor_spec(std::size_t obs_dim, const std::vector<double>& low, const std::vector<double>& high,
                   std::vector<std::size_t> hidden = {256, 256, 256});

/// Parameter names for hidden layer i: "hidden<i>.weight", "hidden<i>.bias",
/// "hidden<i>.norm.gain", "hidden<i>.norm.offset"; output: "output.weight",
/// "output.bias". Weights are stored [out, in].
///
/// Weights and biases are drawn uniformly from +-1/sqrt(fan_in), except the
/// output layer which uses +-3e-3. Layer-norm gains start at 1, offsets at 0.
ParameterSet init_parameters(const MlpSpec& spec, std::mt19937_64& rng);

/// Checks that `params` has exactly the layout `spec` produces.
void check_parameters(const MlpSpec& spec, const ParameterSet& params);

/// Leaves for every parameter of a network, bound on one tape.
struct BoundParameters {
  std::vector<Var> vars;
};

/// Gradients come back from Tape::backward under `prefix + name`, which keeps
/// two networks with the same layout apart on one tape.
BoundParameters bind(Tape& tape, const ParameterSet& params, bool requires_grad, std::string_view prefix = {});

/// Records the forward pass on `tape`. `input` is [batch, input_dim].
/// Throws NumericError if any layer produces a non-finite activation.
Var forward(const MlpSpec& spec, const BoundParameters& params, Var input);

/// Pure evaluation. `input` is rank 1 ([input_dim]) or rank >= 2 with last
/// dimension input_dim; rows map independently.
Tensor forward(const MlpSpec& spec, const ParameterSet& params, const Tensor& input);
Matrix forward(const MlpSpec& spec, const ParameterSet& params, const Eigen::Ref<const Matrix>& input);

}  // namespace wave::nn
