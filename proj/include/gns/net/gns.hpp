#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/core/nn.hpp"
#include "gns/core/ops.hpp"
#include "gns/data/scaling.hpp"
#include "gns/data/stats.hpp"
#include "gns/net/graph.hpp"

namespace gns::net {

inline constexpr std::size_t kHistory = 5;

struct GnsConfig {
  std::size_t latent = 128;
  std::size_t mlp_hidden = 128;
  std::size_t mlp_layers = 2;  // hidden layers per MLP
  std::size_t message_passing_steps = 10;
  double radius = 0.03;
  std::size_t type_embedding = 16;
  bool boundary_features = true;  // distances to the four walls in the node input
  bool clip_boundary = true;      // clip those distances to one radius
  bool encoder_layer_norm = true;
  bool processor_layer_norm = false;
  double layer_norm_eps = 1e-5;

  std::size_t node_input_dim() const { return 2 * kHistory + type_embedding + (boundary_features ? 4 : 0); }
  static constexpr std::size_t edge_input_dim() { return 3; }

  void validate() const {
    if (latent == 0 || message_passing_steps == 0 || type_embedding == 0) throw ConfigError("GnsConfig: zero width");
    if (mlp_layers > 0 && mlp_hidden == 0) throw ConfigError("GnsConfig: zero hidden width");
    if (!(radius > 0.0)) throw ConfigError("GnsConfig: radius must be positive");
    if (!(layer_norm_eps > 0.0)) throw ConfigError("GnsConfig: layer_norm_eps must be positive");
  }

  static GnsConfig paper() { return {}; }
  static GnsConfig desk() {
    GnsConfig c;
    c.latent = 32;
    c.mlp_hidden = 32;
    c.message_passing_steps = 3;
    c.radius = 0.0225;
    c.processor_layer_norm = true;
    c.clip_boundary = false;
    return c;
  }
  static GnsConfig profile(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GnsConfig, latent, mlp_hidden, mlp_layers, message_passing_steps,
                                                radius, type_embedding, boundary_features, clip_boundary,
                                                encoder_layer_norm, processor_layer_norm, layer_norm_eps)

struct InteractionParams {
  MlpParams edge;
  MlpParams node;
};

struct GnsParams {
  GnsConfig config;
  Var type_embedding;  // [types, embedding]
  MlpParams node_encoder;
  MlpParams edge_encoder;
  std::vector<InteractionParams> processor;
  MlpParams decoder;

  /// Every learnable tensor with a stable name, in a fixed order.
  std::vector<NamedParameter> named() const {
    std::vector<NamedParameter> out;
    out.push_back({"type_embedding", type_embedding});
    node_encoder.collect("node_encoder", out);
    edge_encoder.collect("edge_encoder", out);
    for (std::size_t k = 0; k < processor.size(); ++k) {
      processor[k].edge.collect("processor." + std::to_string(k) + ".edge", out);
      processor[k].node.collect("processor." + std::to_string(k) + ".node", out);
    }
    decoder.collect("decoder", out);
    return out;
  }
};

/// Seeded initialization with explicit input widths.
inline GnsParams make_gns_params(const GnsConfig& cfg, std::uint64_t seed, std::size_t node_in, std::size_t edge_in) {
  cfg.validate();
  Rng rng = make_rng(seed, {0x6e6574});
  GnsParams p;
  p.config = cfg;
  Tensor emb = Tensor::matrix(kNumParticleTypes, cfg.type_embedding);
  for (auto& v : emb.values()) v = uniform(rng, -1.0, 1.0);
  p.type_embedding = Var::parameter(std::move(emb), "type_embedding");
  const std::size_t L = cfg.latent;
  auto shape = [&](std::size_t in, std::size_t out, bool ln) {
    return MlpShape{in, cfg.mlp_hidden, cfg.mlp_layers, out, ln, cfg.layer_norm_eps};
  };
  p.node_encoder = make_mlp(shape(node_in, L, cfg.encoder_layer_norm), rng);
  p.edge_encoder = make_mlp(shape(edge_in, L, cfg.encoder_layer_norm), rng);
  for (std::size_t k = 0; k < cfg.message_passing_steps; ++k) {
    InteractionParams ip;
    ip.edge = make_mlp(shape(3 * L, L, cfg.processor_layer_norm), rng);
    ip.node = make_mlp(shape(2 * L, L, cfg.processor_layer_norm), rng);
    p.processor.push_back(std::move(ip));
  }
  p.decoder = make_mlp(shape(L, 2, false), rng);
  return p;
}

inline GnsParams make_gns_params(const GnsConfig& cfg, std::uint64_t seed) {
  return make_gns_params(cfg, seed, cfg.node_input_dim(), GnsConfig::edge_input_dim());
}

/// Encode, message passing with residual edge and node updates and sum
/// aggregation at receivers, decode to one 2-d output per node.
inline Var gns_forward(const GnsParams& params, const Var& node_features, const Var& edge_features,
                       const EdgeList& edges) {
  if (node_features.cols() != params.node_encoder.in_dim()) {
    throw ShapeError("gns_forward: node features have width " + std::to_string(node_features.cols()) +
                     ", node encoder expects " + std::to_string(params.node_encoder.in_dim()));
  }
  if (edge_features.cols() != params.edge_encoder.in_dim() || edge_features.rows() != edges.size()) {
    throw ShapeError("gns_forward: edge features are " + shape_string(edge_features.shape()) + " for " +
                     std::to_string(edges.size()) + " edges, edge encoder expects width " +
                     std::to_string(params.edge_encoder.in_dim()));
  }
  const std::size_t n = node_features.rows();
  Var h = mlp_forward(params.node_encoder, node_features);
  Var e = mlp_forward(params.edge_encoder, edge_features);
  for (const auto& block : params.processor) {
    const auto& first = block.edge.layers.front();
    e = add(e, mlp_forward_from_first(block.edge, edge_node_linear(e, h, edges.senders, edges.receivers,
                                                                   first.weight, first.bias)));
    const Var agg = scatter_add_rows(e, edges.receivers, n);
    h = add(h, mlp_forward(block.node, concat_cols({h, agg})));
  }
  return mlp_forward(params.decoder, h);
}

struct DomainBounds {
  Vec2 lower{0.1, 0.1};
  Vec2 upper{0.9, 0.9};

  static DomainBounds of(const data::ScaleMap& s) { return {s.lower(), s.upper()}; }
};

inline Var points_var(std::span<const Vec2> pts) {
  Tensor t = Tensor::matrix(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t[2 * i] = pts[i].x;
    t[2 * i + 1] = pts[i].y;
  }
  return Var::constant(std::move(t));
}

inline std::vector<Vec2> var_points(const Var& v) {
  std::vector<Vec2> out(v.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v.value()[2 * i], v.value()[2 * i + 1]};
  return out;
}

/// Current position plus the five most recent per-step velocities, oldest first.
struct StepInput {
  Var position;
  std::vector<Var> velocities;
};

/// Six consecutive frames, oldest first, as constant graph inputs.
inline StepInput window_input(std::span<const std::vector<Vec2>> window) {
  if (window.size() != kHistory + 1) throw ContractError("window must hold exactly 6 frames");
  StepInput in;
  in.position = points_var(window.back());
  for (std::size_t k = 1; k < window.size(); ++k) {
    std::vector<Vec2> v(window[k].size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = window[k][i] - window[k - 1][i];
    in.velocities.push_back(points_var(v));
  }
  return in;
}

struct StepOutput {
  EdgeList edges;
  Var node_features;
  Var edge_features;
  Var normalized_acceleration;  // decoder output, all particles
  Var velocity;                 // next velocity; obstacles keep theirs
  Var position;                 // next position; obstacles copied through
};

inline Var node_inputs(const GnsParams& params, const data::Normalizer& norm, std::span<const ParticleType> types,
                       const DomainBounds& bounds, const StepInput& in) {
  const auto& cfg = params.config;
  if (in.velocities.size() != kHistory) throw ContractError("node_inputs: need 5 velocities");
  const auto& vn = norm.velocity;
  vn.check();
  std::vector<double> mul, off;
  for (std::size_t k = 0; k < kHistory; ++k) {
    mul.insert(mul.end(), {1.0 / vn.std.x, 1.0 / vn.std.y});
    off.insert(off.end(), {-vn.mean.x / vn.std.x, -vn.mean.y / vn.std.y});
  }
  std::vector<Var> parts{column_affine(concat_cols(in.velocities), mul, off)};
  std::vector<std::uint32_t> type_idx(types.size());
  for (std::size_t i = 0; i < types.size(); ++i) type_idx[i] = static_cast<std::uint32_t>(types[i]);
  parts.push_back(gather_rows(params.type_embedding, type_idx));
  if (cfg.boundary_features) {
    const std::array<double, 2> up{1.0, 1.0}, down{-1.0, -1.0};
    const std::array<double, 2> lo{-bounds.lower.x, -bounds.lower.y}, hi{bounds.upper.x, bounds.upper.y};
    Var d = concat_cols({column_affine(in.position, up, lo), column_affine(in.position, down, hi)});
    d = scale(d, 1.0 / cfg.radius);
    if (cfg.clip_boundary) d = clamp(d, -1.0, 1.0);
    parts.push_back(d);
  }
  return concat_cols(parts);
}

inline Var edge_inputs(const GnsParams& params, const Var& position, const EdgeList& edges) {
  const Var rel = scale(sub(gather_rows(position, edges.receivers), gather_rows(position, edges.senders)),
                        1.0 / params.config.radius);
  return concat_cols({rel, row_norm(rel)});
}

/// Semi-implicit Euler in per-step units: v' = v + a, p' = p + v'.
inline std::pair<Var, Var> euler_update(const Var& position, const Var& velocity, const Var& normalized_acc,
                                        const data::AxisNorm& acc_norm) {
  acc_norm.check();
  const std::array<double, 2> mul{acc_norm.std.x, acc_norm.std.y}, off{acc_norm.mean.x, acc_norm.mean.y};
  const Var v = add(velocity, column_affine(normalized_acc, mul, off));
  return {v, add(position, v)};
}

/// Builds the radius graph from the current position values and runs the
/// network. Features stay differentiable in positions and velocities.
inline StepOutput gns_acceleration(const GnsParams& params, const data::Normalizer& norm,
                                   std::span<const ParticleType> types, const DomainBounds& bounds,
                                   const StepInput& in) {
  if (in.position.rows() != types.size()) throw ShapeError("gns_step: position rows != particle count");
  StepOutput out;
  out.edges = build_graph(var_points(in.position), params.config.radius);
  out.node_features = node_inputs(params, norm, types, bounds, in);
  out.edge_features = edge_inputs(params, in.position, out.edges);
  out.normalized_acceleration = gns_forward(params, out.node_features, out.edge_features, out.edges);
  return out;
}

inline std::vector<bool> fluid_mask(std::span<const ParticleType> types) {
  std::vector<bool> fluid(types.size());
  for (std::size_t i = 0; i < types.size(); ++i) fluid[i] = types[i] == ParticleType::Fluid;
  return fluid;
}

/// Euler update applied to fluid rows; obstacles keep position and velocity.
inline void integrate(StepOutput& out, std::span<const ParticleType> types, const StepInput& in,
                      const data::AxisNorm& acc_norm) {
  auto [v, p] = euler_update(in.position, in.velocities.back(), out.normalized_acceleration, acc_norm);
  const auto fluid = fluid_mask(types);
  out.velocity = select_rows(fluid, v, in.velocities.back());
  out.position = select_rows(fluid, p, in.position);
}

/// One differentiable model step.
inline StepOutput gns_step(const GnsParams& params, const data::Normalizer& norm, std::span<const ParticleType> types,
                           const DomainBounds& bounds, const StepInput& in) {
  StepOutput out = gns_acceleration(params, norm, types, bounds, in);
  integrate(out, types, in, norm.acceleration);
  return out;
}

/// Next positions from a six-frame window, outside any training graph.
inline std::vector<Vec2> predict_step(const GnsParams& params, const data::Normalizer& norm,
                                      std::span<const ParticleType> types, const DomainBounds& bounds,
                                      std::span<const std::vector<Vec2>> window) {
  return var_points(gns_step(params, norm, types, bounds, window_input(window)).position);
}

}  // namespace gns::net
