#pragma once

#include "gns/core/errors.hpp"
#include "gns/core/vec2.hpp"

namespace gns::data {

/// Per-axis affine map from grid units to the learned coordinate frame.
/// x spans [0.1, 0.9] over the width; y spans [0.1, 0.9 * H / W] over the
/// height, so a square domain lands in [0.1, 0.9]^2 and a 32 x 64 domain
/// in [0.1, 0.9] x [0.1, 1.8].
struct ScaleMap {
  double width = 32.0;
  double height = 32.0;

  ScaleMap() = default;
  ScaleMap(double w, double h) : width(w), height(h) {
    if (!(w > 0.0 && h > 0.0)) throw ConfigError("ScaleMap: domain extents must be positive");
  }

  static constexpr double lo = 0.1;
  static constexpr double x_hi = 0.9;
  double y_hi() const { return x_hi * height / width; }

  double x_span() const { return x_hi - lo; }
  double y_span() const { return y_hi() - lo; }

  Vec2 to_scaled(Vec2 p) const { return {lo + x_span() * (p.x / width), lo + y_span() * (p.y / height)}; }
  Vec2 to_grid(Vec2 q) const { return {(q.x - lo) / x_span() * width, (q.y - lo) / y_span() * height}; }

  Vec2 lower() const { return {lo, lo}; }
  Vec2 upper() const { return {x_hi, y_hi()}; }
};

inline Vec2 scale_position(Vec2 p, double width, double height) { return ScaleMap(width, height).to_scaled(p); }

}  // namespace gns::data
