#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gns/core/errors.hpp"
#include "gns/core/vec2.hpp"

namespace gns::eval {

/// Optimal plan between two equal-size point sets with uniform weights 1/n.
/// For balanced uniform marginals an optimal plan is a permutation matrix
/// scaled by 1/n, so the plan is stored as `assignment[i] = j`.
struct TransportPlan {
  std::vector<std::uint32_t> assignment;
  double cost = 0.0;  // sum of P_ij M_ij

  std::size_t size() const { return assignment.size(); }
  /// Dense P, for inspection on small problems.
  std::vector<double> dense() const {
    const std::size_t n = size();
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) p[i * n + assignment[i]] = 1.0 / static_cast<double>(n);
    return p;
  }
};

/// Minimum-cost perfect matching on a dense n x n row-major cost matrix
/// (shortest augmenting paths with potentials). Returns row -> column.
inline std::vector<std::uint32_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw ShapeError("solve_assignment: cost matrix is not n x n");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based: column 0 is the virtual root of each augmenting search.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      const double* row = cost.data() + (i0 - 1) * n;
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      if (j1 == 0 || !std::isfinite(delta)) throw NumericError("solve_assignment: non-finite cost matrix");
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::uint32_t> out(n);
  for (std::size_t j = 1; j <= n; ++j) out[match[j] - 1] = static_cast<std::uint32_t>(j - 1);
  return out;
}

inline std::vector<double> distance_matrix(std::span<const Vec2> a, std::span<const Vec2> b) {
  std::vector<double> m(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m[i * b.size() + j] = (a[i] - b[j]).norm();
  return m;
}

inline TransportPlan transport_plan(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() != b.size()) {
    throw ShapeError("emd: point sets differ in size (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  TransportPlan plan;
  const std::size_t n = a.size();
  if (n == 0) return plan;
  const auto m = distance_matrix(a, b);
  plan.assignment = solve_assignment(m, n);
  // Summed in sorted order so relabeling either set cannot change the bits.
  std::vector<double> moved(n);
  for (std::size_t i = 0; i < n; ++i) moved[i] = m[i * n + plan.assignment[i]];
  std::sort(moved.begin(), moved.end());
  double total = 0.0;
  for (double d : moved) total += d;
  plan.cost = total / static_cast<double>(n);
  return plan;
}

/// Earth mover's distance with Euclidean ground cost and uniform weights.
inline double emd(std::span<const Vec2> a, std::span<const Vec2> b) { return transport_plan(a, b).cost; }

}  // namespace gns::eval
