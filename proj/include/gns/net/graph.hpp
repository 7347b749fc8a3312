#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gns/core/errors.hpp"
#include "gns/core/vec2.hpp"

namespace gns::net {

/// Directed edges in canonical (sender, receiver) order.
struct EdgeList {
  std::vector<std::uint32_t> senders;
  std::vector<std::uint32_t> receivers;

  std::size_t size() const { return senders.size(); }
  friend bool operator==(const EdgeList&, const EdgeList&) = default;
};

inline bool within_radius(Vec2 a, Vec2 b, double radius) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy <= radius * radius;
}

/// All ordered pairs i != j with |p_i - p_j| <= radius, found with a uniform
/// grid hash. The cell is a hair wider than the radius so any neighbour pair
/// sits in adjacent cells despite rounding in the cell coordinate.
inline EdgeList build_graph(std::span<const Vec2> positions, double radius) {
  if (!(radius > 0.0)) throw ConfigError("connectivity radius must be positive");
  const std::size_t n = positions.size();
  const double cell = radius * (1.0 + 1e-9);
  struct Entry {
    std::int64_t cx, cy;
    std::uint32_t index;
  };
  std::vector<Entry> entries(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = positions[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw NumericError("build_graph: non-finite position");
    entries[i] = {static_cast<std::int64_t>(std::floor(p.x / cell)), static_cast<std::int64_t>(std::floor(p.y / cell)),
                  static_cast<std::uint32_t>(i)};
  }
  auto key_less = [](const Entry& a, const Entry& b) {
    return a.cx != b.cx ? a.cx < b.cx : (a.cy != b.cy ? a.cy < b.cy : a.index < b.index);
  };
  std::vector<Entry> sorted = entries;
  std::sort(sorted.begin(), sorted.end(), key_less);

  EdgeList edges;
  std::vector<std::uint32_t> found;
  for (std::size_t i = 0; i < n; ++i) {
    found.clear();
    const Entry& e = entries[i];
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        const Entry lo{e.cx + dx, e.cy + dy, 0}, hi{e.cx + dx, e.cy + dy, UINT32_MAX};
        auto first = std::lower_bound(sorted.begin(), sorted.end(), lo, key_less);
        auto last = std::upper_bound(first, sorted.end(), hi, key_less);
        for (auto it = first; it != last; ++it) {
          if (it->index != i && within_radius(positions[i], positions[it->index], radius)) found.push_back(it->index);
        }
      }
    std::sort(found.begin(), found.end());
    for (auto j : found) {
      edges.senders.push_back(static_cast<std::uint32_t>(i));
      edges.receivers.push_back(j);
    }
  }
  return edges;
}

/// Number of neighbours of every particle within the radius.
inline std::vector<std::uint32_t> neighbor_counts(std::span<const Vec2> positions, double radius) {
  std::vector<std::uint32_t> counts(positions.size(), 0);
  const EdgeList e = build_graph(positions, radius);
  for (auto s : e.senders) counts[s] += 1;
  return counts;
}

}  // namespace gns::net
