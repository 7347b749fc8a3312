#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "gns/core/ops.hpp"
#include "gns/core/rng.hpp"
#include "gns/data/stats.hpp"
#include "gns/net/gns.hpp"

namespace gns::train {

/// Maps a step input to normalized accelerations [particles, 2].
using AccelerationFn = std::function<Var(const net::StepInput&)>;

inline AccelerationFn gns_acceleration_fn(const net::GnsParams& params, const data::Normalizer& norm,
                                          std::span<const ParticleType> types, const net::DomainBounds& bounds) {
  return [&params, &norm, types, bounds](const net::StepInput& in) {
    return net::gns_acceleration(params, norm, types, bounds, in).normalized_acceleration;
  };
}

inline std::vector<std::uint32_t> fluid_rows(std::span<const ParticleType> types) {
  std::vector<std::uint32_t> rows;
  for (std::size_t i = 0; i < types.size(); ++i)
    if (types[i] == ParticleType::Fluid) rows.push_back(static_cast<std::uint32_t>(i));
  return rows;
}

/// Mean over particles and axes of the squared acceleration error.
inline Var one_step_loss(const Var& pred, const Var& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("one_step_loss: " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
  }
  return mean(square(sub(pred, gt)));
}

/// The same loss restricted to the listed rows (the fluid particles).
inline Var one_step_loss(const Var& pred, const Var& gt, std::span<const std::uint32_t> rows) {
  if (rows.empty()) throw DataError("loss needs at least one fluid particle");
  return one_step_loss(gather_rows(pred, rows), gather_rows(gt, rows));
}

/// Normalized second differences prev - 2 cur + next for every particle.
inline Var acceleration_targets(const std::vector<Vec2>& prev, const std::vector<Vec2>& cur,
                                const std::vector<Vec2>& next, const data::AxisNorm& norm) {
  std::vector<Vec2> a(cur.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = data::normalize((next[i] - cur[i]) - (cur[i] - prev[i]), norm);
  return net::points_var(a);
}

struct NoiseConfig {
  bool enabled = false;
  double accumulated_position_std = 6.7e-4;  // scaled units, at the newest frame

  void validate() const {
    if (!(accumulated_position_std >= 0.0)) throw ConfigError("noise std must be non-negative");
  }
  bool active() const { return enabled && accumulated_position_std > 0.0; }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NoiseConfig, enabled, accumulated_position_std)

/// Random-walk corruption of the fluid velocity history. Each of the five
/// velocities gets i.i.d. N(0, std / sqrt(5)) per axis; positions carry the
/// running sum, so the oldest frame is untouched and the newest has total std.
inline std::vector<std::vector<Vec2>> inject_noise(std::span<const std::vector<Vec2>> window,
                                                   std::span<const ParticleType> types, const NoiseConfig& cfg,
                                                   Rng& rng) {
  cfg.validate();
  std::vector<std::vector<Vec2>> out(window.begin(), window.end());
  if (!cfg.active()) return out;
  if (window.size() != net::kHistory + 1) throw ContractError("inject_noise: window must hold 6 frames");
  std::normal_distribution<double> step(0.0, cfg.accumulated_position_std / std::sqrt(double(net::kHistory)));
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i] != ParticleType::Fluid) continue;
    Vec2 walk{};
    for (std::size_t k = 1; k < out.size(); ++k) {
      walk.x += step(rng);
      walk.y += step(rng);
      out[k][i] += walk;
    }
  }
  return out;
}

namespace detail {

/// Loss terms of the unrolled objective. `frames` holds six history frames
/// and n + 1 continuation frames. Term 0 sees ground truth only; term i sees
/// the model's own last i velocities and position. With `detach`, predicted
/// states re-enter as constants so no gradient flows through them.
inline std::vector<Var> unrolled_terms(const AccelerationFn& model, std::span<const ParticleType> types,
                                       const data::Normalizer& norm, std::span<const std::vector<Vec2>> frames,
                                       std::size_t n, bool detach = false) {
  if (frames.size() < net::kHistory + 2 + n) {
    throw ContractError("multi-step loss: need " + std::to_string(net::kHistory + 2 + n) + " frames, got " +
                        std::to_string(frames.size()));
  }
  const auto rows = fluid_rows(types);
  const auto fluid = net::fluid_mask(types);
  net::StepInput in = net::window_input(frames.subspan(0, net::kHistory + 1));
  std::vector<Var> terms;
  for (std::size_t i = 0; i <= n; ++i) {
    const Var acc = model(in);
    const std::size_t c = net::kHistory + i;
    terms.push_back(one_step_loss(acc, acceleration_targets(frames[c - 1], frames[c], frames[c + 1], norm.acceleration),
                                  rows));
    if (i == n) break;
    auto [v, p] = net::euler_update(in.position, in.velocities.back(), acc, norm.acceleration);
    v = select_rows(fluid, v, in.velocities.back());
    p = select_rows(fluid, p, in.position);
    if (detach) {
      v = Var::constant(v.value());
      p = Var::constant(p.value());
    }
    in.velocities.erase(in.velocities.begin());
    in.velocities.push_back(v);
    in.position = p;
  }
  return terms;
}

}  // namespace detail

/// (term_0 + sum_{i=1..n} term_i) / n.
inline Var multi_step_loss(const AccelerationFn& model, std::span<const ParticleType> types,
                           const data::Normalizer& norm, std::span<const std::vector<Vec2>> frames, std::size_t n) {
  if (n < 1) throw ContractError("multi_step_loss requires n >= 1");
  const auto terms = detail::unrolled_terms(model, types, norm, frames, n);
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / static_cast<double>(n));
}

/// One-step loss on a (possibly corrupted) window; the target keeps the
/// ground-truth next position fixed.
inline Var one_step_sample_loss(const AccelerationFn& model, std::span<const ParticleType> types,
                                const data::Normalizer& norm, std::span<const std::vector<Vec2>> window,
                                const std::vector<Vec2>& next) {
  const Var acc = model(net::window_input(window));
  return one_step_loss(acc, acceleration_targets(window[4], window[5], next, norm.acceleration), fluid_rows(types));
}

}  // namespace gns::train
