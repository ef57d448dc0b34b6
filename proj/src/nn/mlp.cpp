#include "wave/nn/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wave::nn {

namespace {

struct LayerShape {
  std::string prefix;
  std::size_t in = 0;
  std::size_t out = 0;
  bool norm = false;
};

std::vector<LayerShape> layer_shapes(const MlpSpec& spec) {
  std::vector<LayerShape> layers;
  std::size_t in = spec.input_dim;
  for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
    layers.push_back({"hidden" + std::to_string(i), in, spec.hidden_dims[i], spec.use_layer_norm});
    in = spec.hidden_dims[i];
  }
  layers.push_back({"output", in, spec.output_dim, false});
  return layers;
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

void check_activation(Var x, const std::string& layer) {
  if (!x.value().allFinite()) throw NumericError("non-finite activation in layer " + layer);
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("MlpSpec: input/output dims must be >= 1");
  for (auto h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("MlpSpec: hidden dims must be >= 1");
  }
  const bool bounded = !output_low.empty() || !output_high.empty();
  if (bounded) {
    if (output_activation != Activation::tanh) {
      throw std::invalid_argument("MlpSpec: output bounds require a tanh head");
    }
    if (output_low.size() != output_dim || output_high.size() != output_dim) {
      throw std::invalid_argument("MlpSpec: output bounds must have output_dim entries");
    }
    for (std::size_t i = 0; i < output_dim; ++i) {
      if (!(output_low[i] < output_high[i])) throw std::invalid_argument("MlpSpec: output_low must be < output_high");
    }
  }
}

MlpSpec critic_spec(std::size_t obs_dim, std::size_t act_dim, std::vector<std::size_t> hidden) {
  MlpSpec spec;
  spec.input_dim = obs_dim + act_dim;
  spec.hidden_dims = std::move(hidden);
  spec.output_dim = 1;
  return spec;
}

MlpSpec actor_spec(std::size_t obs_dim, const std::vector<double>& low, const std::vector<double>& high,
                   std::vector<std::size_t> hidden) {
  MlpSpec spec;
  spec.input_dim = obs_dim;
  spec.hidden_dims = std::move(hidden);
  spec.output_dim = low.size();
  spec.output_activation = Activation::tanh;
  spec.output_low = low;
  spec.output_high = high;
  return spec;
}

ParameterSet init_parameters(const MlpSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  ParameterSet params;
  for (const auto& layer : layer_shapes(spec)) {
    const double bound = layer.prefix == "output" ? 3e-3 : 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w({layer.out, layer.in});
    for (auto& v : w.data()) v = dist(rng);
    Tensor b({layer.out});
    for (auto& v : b.data()) v = dist(rng);
    params.add(layer.prefix + ".weight", std::move(w));
    params.add(layer.prefix + ".bias", std::move(b));
    if (layer.norm) {
      Tensor gain({layer.out});
      for (auto& v : gain.data()) v = 1.0;
      params.add(layer.prefix + ".norm.gain", std::move(gain));
      params.add(layer.prefix + ".norm.offset", Tensor({layer.out}));
    }
  }
  return params;
}

void check_parameters(const MlpSpec& spec, const ParameterSet& params) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> expected;
  for (const auto& layer : layer_shapes(spec)) {
    expected.push_back({layer.prefix + ".weight", {layer.out, layer.in}});
    expected.push_back({layer.prefix + ".bias", {layer.out}});
    if (layer.norm) {
      expected.push_back({layer.prefix + ".norm.gain", {layer.out}});
      expected.push_back({layer.prefix + ".norm.offset", {layer.out}});
    }
  }
  if (expected.size() != params.size()) {
    throw std::invalid_argument("network parameters: expected " + std::to_string(expected.size()) +
                                " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, t] = params.entry(i);
    if (name != expected[i].first || t.shape() != expected[i].second) {
      throw std::invalid_argument("network parameters: expected " + expected[i].first + " " +
                                  shape_string(expected[i].second) + ", got " + name + " " + shape_string(t.shape()));
    }
  }
}

BoundParameters bind(Tape& tape, const ParameterSet& params, bool requires_grad, std::string_view prefix) {
  BoundParameters bound;
  bound.vars.reserve(params.size());
  for (const auto& [name, t] : params) {
    bound.vars.push_back(tape.parameter(std::string(prefix) + name, t, requires_grad));
  }
  return bound;
}

Var forward(const MlpSpec& spec, const BoundParameters& params, Var input) {
  if (static_cast<std::size_t>(input.cols()) != spec.input_dim) {
    throw std::invalid_argument("forward: input width " + std::to_string(input.cols()) + " but network expects " +
                                std::to_string(spec.input_dim));
  }
  const auto layers = layer_shapes(spec);
  std::size_t expected = 0;
  for (const auto& l : layers) expected += l.norm ? 4 : 2;
  if (params.vars.size() != expected) throw std::invalid_argument("forward: parameter count does not match spec");

  Var x = input;
  std::size_t p = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    x = affine(x, params.vars[p], params.vars[p + 1]);
    p += 2;
    if (layer.norm) {
      x = layer_norm(x, params.vars[p], params.vars[p + 1]);
      p += 2;
    }
    const bool last = i + 1 == layers.size();
    x = activate(x, last ? spec.output_activation : spec.hidden_activation);
    if (last && !spec.output_low.empty()) {
      RowVector half(spec.output_dim), mid(spec.output_dim);
      for (std::size_t j = 0; j < spec.output_dim; ++j) {
        half[j] = 0.5 * (spec.output_high[j] - spec.output_low[j]);
        mid[j] = 0.5 * (spec.output_high[j] + spec.output_low[j]);
      }
      x = scale_shift(x, half, mid);
    }
    check_activation(x, layer.prefix);
  }
  return x;
}

Matrix forward(const MlpSpec& spec, const ParameterSet& params, const Eigen::Ref<const Matrix>& input) {
  check_parameters(spec, params);
  if (static_cast<std::size_t>(input.cols()) != spec.input_dim) {
    throw std::invalid_argument("forward: input width " + std::to_string(input.cols()) + " but network expects " +
                                std::to_string(spec.input_dim));
  }
  const auto layers = layer_shapes(spec);
  auto row = [&](std::size_t i) {
    const auto& t = params.entry(i).second;
    return Eigen::Map<const RowVector>(t.data().data(), static_cast<Eigen::Index>(t.size()));
  };
  Matrix x = input;
  std::size_t p = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    x = affine_value(x, params.entry(p).second.matrix(), row(p + 1));
    p += 2;
    if (layer.norm) {
      x = layer_norm_value(x, row(p), row(p + 1));
      p += 2;
    }
    const bool last = i + 1 == layers.size();
    switch (last ? spec.output_activation : spec.hidden_activation) {
      case Activation::identity: break;
      case Activation::relu: x = x.cwiseMax(0.0); break;
      case Activation::tanh: x = x.array().tanh().matrix(); break;
    }
    if (last && !spec.output_low.empty()) {
      for (std::size_t j = 0; j < spec.output_dim; ++j) {
        const double half = 0.5 * (spec.output_high[j] - spec.output_low[j]);
        const double mid = 0.5 * (spec.output_high[j] + spec.output_low[j]);
        const auto c = static_cast<Eigen::Index>(j);
        x.col(c) = (x.col(c).array() * half + mid).matrix();
      }
    }
    if (!x.allFinite()) throw NumericError("non-finite activation in layer " + layer.prefix);
  }
  return x;
}

Tensor forward(const MlpSpec& spec, const ParameterSet& params, const Tensor& input) {
  if (input.last_dim() != spec.input_dim) {
    throw std::invalid_argument("forward: input last dimension " + std::to_string(input.last_dim()) +
                                " but network expects " + std::to_string(spec.input_dim));
  }
  input.check_finite("network input");
  Matrix out = forward(spec, params, Matrix(input.matrix()));
  std::vector<std::size_t> shape = input.shape();
  if (shape.empty()) shape.push_back(1);
  shape.back() = spec.output_dim;
  Tensor result(shape);
  result.matrix() = out;
  return result;
}

}  // namespace wave::nn
