#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include <json.hpp>

#include "gns/core/errors.hpp"
#include "gns/core/vec2.hpp"

namespace gns::data {

/// Welford accumulator over 2-d samples, one mean and M2 per axis.
struct RunningStats {
  std::uint64_t count = 0;
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> m2{0.0, 0.0};

  void add(Vec2 s) {
    count += 1;
    const double n = static_cast<double>(count);
    const double d0 = s.x - mean[0], d1 = s.y - mean[1];
    mean[0] += d0 / n;
    mean[1] += d1 / n;
    m2[0] += d0 * (s.x - mean[0]);
    m2[1] += d1 * (s.y - mean[1]);
  }

  /// Chan et al. pairwise combination; merging in a fixed order is deterministic.
  void merge(const RunningStats& o) {
    if (o.count == 0) return;
    if (count == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(count), nb = static_cast<double>(o.count);
    const double n = na + nb;
    for (int k = 0; k < 2; ++k) {
      const double delta = o.mean[k] - mean[k];
      mean[k] += delta * nb / n;
      m2[k] += o.m2[k] + delta * delta * na * nb / n;
    }
    count += o.count;
  }

  /// Population standard deviation per axis.
  Vec2 std_dev() const {
    if (count < 2) throw DataError("statistics need at least two samples, have " + std::to_string(count));
    const double n = static_cast<double>(count);
    return {std::sqrt(m2[0] / n), std::sqrt(m2[1] / n)};
  }
  Vec2 mean_vec() const { return {mean[0], mean[1]}; }
};

struct NormStats {
  RunningStats velocity;
  RunningStats acceleration;

  void merge(const NormStats& o) {
    velocity.merge(o.velocity);
    acceleration.merge(o.acceleration);
  }
};

inline void accumulate_stats(NormStats& stats, std::span<const Vec2> velocities, std::span<const Vec2> accelerations) {
  for (const auto& v : velocities) stats.velocity.add(v);
  for (const auto& a : accelerations) stats.acceleration.add(a);
}

/// Mean and standard deviation pair used by normalize / denormalize.
struct AxisNorm {
  Vec2 mean{};
  Vec2 std{1.0, 1.0};

  static AxisNorm from(const RunningStats& s) {
    AxisNorm n{s.mean_vec(), s.std_dev()};
    n.check();
    return n;
  }
  void check() const {
    if (!(std.x > 0.0 && std.y > 0.0)) throw DataError("normalization std must be positive");
  }
};

inline Vec2 normalize(Vec2 x, const AxisNorm& n) {
  n.check();
  return {(x.x - n.mean.x) / n.std.x, (x.y - n.mean.y) / n.std.y};
}
inline Vec2 denormalize(Vec2 x, const AxisNorm& n) {
  n.check();
  return {x.x * n.std.x + n.mean.x, x.y * n.std.y + n.mean.y};
}

inline nlohmann::json to_json_value(const RunningStats& s) {
  nlohmann::json j = {{"count", s.count}, {"mean", s.mean}, {"m2", s.m2}};
  if (s.count >= 2) {
    const Vec2 sd = s.std_dev();
    j["std"] = {sd.x, sd.y};
  }
  return j;
}
inline RunningStats running_stats_from_json(const nlohmann::json& j) {
  RunningStats s;
  s.count = j.at("count").get<std::uint64_t>();
  s.mean = j.at("mean").get<std::array<double, 2>>();
  s.m2 = j.at("m2").get<std::array<double, 2>>();
  return s;
}

inline nlohmann::json to_json_value(const NormStats& s) {
  return {{"velocity", to_json_value(s.velocity)}, {"acceleration", to_json_value(s.acceleration)}};
}
inline NormStats norm_stats_from_json(const nlohmann::json& j) {
  return {running_stats_from_json(j.at("velocity")), running_stats_from_json(j.at("acceleration"))};
}

/// Normalizers resolved once from accumulated statistics.
struct Normalizer {
  AxisNorm velocity;
  AxisNorm acceleration;

  static Normalizer from(const NormStats& s) { return {AxisNorm::from(s.velocity), AxisNorm::from(s.acceleration)}; }
};

}  // namespace gns::data
