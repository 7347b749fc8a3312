#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gns/core/ops.hpp"
#include "gns/core/rng.hpp"

namespace gns {

struct NamedParameter {
  std::string name;
  Var var;
};

struct LinearLayer {
  Var weight;  // [in, out]
  Var bias;    // [out]

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

/// Affine layers with ReLU between them, optionally followed by LayerNorm on
/// the output.
struct MlpParams {
  std::vector<LinearLayer> layers;
  bool output_layer_norm = false;
  Var ln_gain;
  Var ln_bias;
  double ln_eps = 1e-5;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  void collect(const std::string& prefix, std::vector<NamedParameter>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.push_back({prefix + ".layer" + std::to_string(i) + ".weight", layers[i].weight});
      out.push_back({prefix + ".layer" + std::to_string(i) + ".bias", layers[i].bias});
    }
    if (output_layer_norm) {
      out.push_back({prefix + ".layer_norm.gain", ln_gain});
      out.push_back({prefix + ".layer_norm.bias", ln_bias});
    }
  }
};

struct MlpShape {
  std::size_t in_dim = 0;
  std::size_t hidden_dim = 128;
  std::size_t hidden_layers = 2;
  std::size_t out_dim = 128;
  bool output_layer_norm = false;
  double ln_eps = 1e-5;
};

/// Glorot-uniform weights, zero biases, unit LayerNorm gain. Draws come from
/// `rng` in layer order so a seed fixes every value.
inline MlpParams make_mlp(const MlpShape& shape, Rng& rng) {
  if (shape.in_dim == 0 || shape.out_dim == 0 || (shape.hidden_layers > 0 && shape.hidden_dim == 0)) {
    throw ConfigError("make_mlp: zero-width layer");
  }
  MlpParams mlp;
  std::vector<std::size_t> dims{shape.in_dim};
  for (std::size_t i = 0; i < shape.hidden_layers; ++i) dims.push_back(shape.hidden_dim);
  dims.push_back(shape.out_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const std::size_t in = dims[i], out = dims[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w = Tensor::matrix(in, out);
    for (auto& v : w.values()) v = uniform(rng, -limit, limit);
    mlp.layers.push_back({Var::parameter(std::move(w)), Var::parameter(Tensor(Shape{out}, 0.0))});
  }
  mlp.output_layer_norm = shape.output_layer_norm;
  mlp.ln_eps = shape.ln_eps;
  if (shape.output_layer_norm) {
    mlp.ln_gain = Var::parameter(Tensor(Shape{shape.out_dim}, 1.0));
    mlp.ln_bias = Var::parameter(Tensor(Shape{shape.out_dim}, 0.0));
  }
  return mlp;
}

/// Continues an MLP whose first affine layer has already been applied.
inline Var mlp_forward_from_first(const MlpParams& mlp, Var h) {
  for (std::size_t i = 1; i < mlp.layers.size(); ++i) h = linear(relu(h), mlp.layers[i].weight, mlp.layers[i].bias);
  if (mlp.output_layer_norm) h = layer_norm(h, mlp.ln_gain, mlp.ln_bias, mlp.ln_eps);
  return h;
}

inline Var mlp_forward(const MlpParams& mlp, const Var& input) {
  if (mlp.layers.empty()) throw ShapeError("mlp_forward: MLP has no layers");
  Var h = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& layer = mlp.layers[i];
    if (h.cols() != layer.in_dim()) {
      throw ShapeError("mlp_forward: layer " + std::to_string(i) + " expects width " + std::to_string(layer.in_dim()) +
                       ", got " + std::to_string(h.cols()));
    }
    h = linear(h, layer.weight, layer.bias);
    if (i + 1 < mlp.layers.size()) h = relu(h);
  }
  if (mlp.output_layer_norm) h = layer_norm(h, mlp.ln_gain, mlp.ln_bias, mlp.ln_eps);
  return h;
}

}  // namespace gns
