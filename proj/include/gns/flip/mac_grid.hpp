#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gns/core/errors.hpp"
#include "gns/core/vec2.hpp"

namespace gns::flip {

enum class CellFlag : std::uint8_t { Empty = 0, Fluid = 1, Solid = 2 };

/// Staggered grid with unit cell size. u(i, j) sits at (i, j + 0.5),
/// v(i, j) at (i + 0.5, j); cell (i, j) covers [i, i+1) x [j, j+1).
/// Everything outside the grid counts as solid wall.
struct MacGrid {
  int nx = 0;
  int ny = 0;
  std::vector<double> u;  // (nx + 1) * ny
  std::vector<double> v;  // nx * (ny + 1)
  std::vector<CellFlag> cells;

  MacGrid() = default;
  MacGrid(int nx_, int ny_)
      : nx(nx_),
        ny(ny_),
        u(static_cast<std::size_t>((nx_ + 1) * ny_), 0.0),
        v(static_cast<std::size_t>(nx_ * (ny_ + 1)), 0.0),
        cells(static_cast<std::size_t>(nx_ * ny_), CellFlag::Empty) {
    if (nx_ <= 0 || ny_ <= 0) throw ConfigError("MacGrid needs positive resolution");
  }

  std::size_t u_index(int i, int j) const { return static_cast<std::size_t>(j * (nx + 1) + i); }
  std::size_t v_index(int i, int j) const { return static_cast<std::size_t>(j * nx + i); }
  std::size_t cell_index(int i, int j) const { return static_cast<std::size_t>(j * nx + i); }

  double& U(int i, int j) { return u[u_index(i, j)]; }
  double U(int i, int j) const { return u[u_index(i, j)]; }
  double& V(int i, int j) { return v[v_index(i, j)]; }
  double V(int i, int j) const { return v[v_index(i, j)]; }

  bool in_bounds(int i, int j) const { return i >= 0 && j >= 0 && i < nx && j < ny; }
  CellFlag cell(int i, int j) const { return in_bounds(i, j) ? cells[cell_index(i, j)] : CellFlag::Solid; }
  bool is_solid(int i, int j) const { return cell(i, j) == CellFlag::Solid; }
  bool is_fluid(int i, int j) const { return cell(i, j) == CellFlag::Fluid; }

  /// Zero normal velocity on every face that touches a solid cell or the wall.
  void enforce_solid_boundaries() {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i <= nx; ++i)
        if (is_solid(i - 1, j) || is_solid(i, j)) U(i, j) = 0.0;
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (is_solid(i, j - 1) || is_solid(i, j)) V(i, j) = 0.0;
  }

  double divergence(int i, int j) const { return U(i + 1, j) - U(i, j) + V(i, j + 1) - V(i, j); }

  double max_fluid_divergence() const {
    double m = 0.0;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (is_fluid(i, j)) m = std::max(m, std::abs(divergence(i, j)));
    return m;
  }

  /// Bilinear sample of the u component at a point.
  double sample_u(Vec2 p) const { return sample(u, nx + 1, ny, p.x, p.y - 0.5); }
  double sample_v(Vec2 p) const { return sample(v, nx, ny + 1, p.x - 0.5, p.y); }
  Vec2 velocity(Vec2 p) const { return {sample_u(p), sample_v(p)}; }

  /// Bilinear stencil on a (w x h) lattice; coordinates are clamped to the lattice.
  struct Stencil {
    int i0, j0;
    double fx, fy;
  };
  static Stencil stencil(int w, int h, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    int i0 = std::min(static_cast<int>(std::floor(x)), std::max(w - 2, 0));
    int j0 = std::min(static_cast<int>(std::floor(y)), std::max(h - 2, 0));
    return {i0, j0, x - i0, y - j0};
  }
  static double sample(const std::vector<double>& f, int w, int h, double x, double y) {
    const Stencil s = stencil(w, h, x, y);
    const int i1 = std::min(s.i0 + 1, w - 1), j1 = std::min(s.j0 + 1, h - 1);
    auto at = [&](int i, int j) { return f[static_cast<std::size_t>(j * w + i)]; };
    return (1 - s.fx) * (1 - s.fy) * at(s.i0, s.j0) + s.fx * (1 - s.fy) * at(i1, s.j0) +
           (1 - s.fx) * s.fy * at(s.i0, j1) + s.fx * s.fy * at(i1, j1);
  }
};

}  // namespace gns::flip
