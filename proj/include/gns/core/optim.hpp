#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gns/core/nn.hpp"

namespace gns {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
      throw ConfigError("Adam requires 0 < beta1, beta2 < 1 and epsilon > 0");
    }
  }
};

struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  AdamConfig config;

  static AdamState zeros(std::size_t n, AdamConfig cfg = {}) {
    cfg.validate();
    return AdamState{0, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), cfg};
  }
};

/// One bias-corrected Adam update over a flat parameter vector. Nothing is
/// modified when any gradient is non-finite.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment lengths differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam_step: non-finite gradient at parameter index " + std::to_string(i));
    }
  }
  const auto& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    params[i] -= lr * (m / corr1) / (std::sqrt(v / corr2) + c.epsilon);
  }
}

inline std::size_t total_size(std::span<const NamedParameter> params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.size();
  return n;
}

/// Adam over a list of graph parameters, reading their current grads.
/// Parameters that were not reached by backward count as zero gradient.
inline void adam_step(std::span<const NamedParameter> params, AdamState& state, double lr) {
  const std::size_t n = total_size(params);
  std::vector<double> flat(n), grads(n, 0.0);
  std::size_t off = 0;
  for (const auto& p : params) {
    const auto v = p.var.value().values();
    std::copy(v.begin(), v.end(), flat.begin() + static_cast<std::ptrdiff_t>(off));
    const auto g = p.var.grad();
    if (g.size() == v.size()) std::copy(g.begin(), g.end(), grads.begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  try {
    adam_step(flat, grads, state, lr);
  } catch (const NumericError&) {
    // Re-raise with the tensor name attached.
    for (std::size_t i = 0, base = 0; i < params.size(); base += params[i].var.size(), ++i) {
      for (std::size_t j = 0; j < params[i].var.size(); ++j) {
        if (!std::isfinite(grads[base + j])) {
          throw NumericError("adam_step: non-finite gradient at parameter index " + std::to_string(base + j) +
                             " (" + params[i].name + "[" + std::to_string(j) + "])");
        }
      }
    }
    throw;
  }
  off = 0;
  for (const auto& p : params) {
    Var handle = p.var;
    auto dst = handle.mutable_value().values();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
    off += dst.size();
  }
}

/// Exponential decay toward a floor: floor + (start - floor) * 0.1^(step / decay_steps).
struct LrSchedule {
  double lr_start = 1e-4;
  double lr_floor = 1e-6;
  double decay_steps = 1e5;

  void validate() const {
    if (!(decay_steps > 0.0) || lr_floor < 0.0 || lr_start < lr_floor) {
      throw ConfigError("LrSchedule requires decay_steps > 0 and lr_start >= lr_floor >= 0");
    }
  }
};

inline double lr_at(const LrSchedule& s, std::uint64_t step) {
  return s.lr_floor + (s.lr_start - s.lr_floor) * std::pow(0.1, static_cast<double>(step) / s.decay_steps);
}

}  // namespace gns
