#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include "gns/flip/mac_grid.hpp"

namespace gns::flip {

struct PressureResult {
  int iterations = 0;
  double max_residual = 0.0;  // equals the post-projection max |divergence| over fluid cells
  std::vector<double> pressure;  // per cell, zero outside fluid; scaled by dt / density
};

namespace detail {

/// Matrix-free 5-point Laplacian over fluid cells: Neumann at solid
/// neighbours, Dirichlet zero at empty neighbours.
struct PoissonSystem {
  const MacGrid& grid;
  std::vector<int> id;  // cell -> unknown, -1 when not fluid
  std::vector<int> ci, cj;
  std::vector<double> diag;

  explicit PoissonSystem(const MacGrid& g) : grid(g), id(g.cells.size(), -1) {
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        if (g.is_fluid(i, j)) {
          id[g.cell_index(i, j)] = static_cast<int>(ci.size());
          ci.push_back(i);
          cj.push_back(j);
          double d = 0.0;
          d += !g.is_solid(i - 1, j);
          d += !g.is_solid(i + 1, j);
          d += !g.is_solid(i, j - 1);
          d += !g.is_solid(i, j + 1);
          diag.push_back(d);
        }
  }

  std::size_t size() const { return ci.size(); }
  int unknown(int i, int j) const { return grid.in_bounds(i, j) ? id[grid.cell_index(i, j)] : -1; }

  void apply(const std::vector<double>& x, std::vector<double>& out) const {
    for (std::size_t k = 0; k < size(); ++k) {
      const int i = ci[k], j = cj[k];
      double s = diag[k] * x[k];
      for (int n : {unknown(i - 1, j), unknown(i + 1, j), unknown(i, j - 1), unknown(i, j + 1)})
        if (n >= 0) s -= x[static_cast<std::size_t>(n)];
      out[k] = s;
    }
  }
};

/// Modified incomplete Cholesky (level zero) preconditioner.
struct MicPreconditioner {
  const PoissonSystem& sys;
  std::vector<double> precon;

  explicit MicPreconditioner(const PoissonSystem& s) : sys(s), precon(s.size(), 0.0) {
    constexpr double tau = 0.97, sigma = 0.25;
    // Unknowns are numbered in row-major cell order, so (i-1, j) and
    // (i, j-1) always precede (i, j).
    for (std::size_t k = 0; k < s.size(); ++k) {
      const int i = s.ci[k], j = s.cj[k];
      double e = s.diag[k];
      const int left = s.unknown(i - 1, j), down = s.unknown(i, j - 1);
      if (left >= 0) {
        const double pl = precon[static_cast<std::size_t>(left)];
        const double a = -1.0;  // coupling to (i, j)
        const double a_up_of_left = s.unknown(i - 1, j + 1) >= 0 ? -1.0 : 0.0;
        e -= (a * pl) * (a * pl) + tau * (a * a_up_of_left * pl * pl);
      }
      if (down >= 0) {
        const double pd = precon[static_cast<std::size_t>(down)];
        const double a = -1.0;
        const double a_right_of_down = s.unknown(i + 1, j - 1) >= 0 ? -1.0 : 0.0;
        e -= (a * pd) * (a * pd) + tau * (a * a_right_of_down * pd * pd);
      }
      if (e < sigma * s.diag[k]) e = s.diag[k];
      precon[k] = e > 0.0 ? 1.0 / std::sqrt(e) : 0.0;
    }
  }

  void apply(const std::vector<double>& r, std::vector<double>& z) const {
    const std::size_t n = sys.size();
    std::vector<double> q(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const int i = sys.ci[k], j = sys.cj[k];
      double t = r[k];
      const int left = sys.unknown(i - 1, j), down = sys.unknown(i, j - 1);
      if (left >= 0) t += precon[static_cast<std::size_t>(left)] * q[static_cast<std::size_t>(left)];
      if (down >= 0) t += precon[static_cast<std::size_t>(down)] * q[static_cast<std::size_t>(down)];
      q[k] = t * precon[k];
    }
    for (std::size_t kk = n; kk-- > 0;) {
      const int i = sys.ci[kk], j = sys.cj[kk];
      double t = q[kk];
      const int right = sys.unknown(i + 1, j), up = sys.unknown(i, j + 1);
      if (right >= 0) t += precon[kk] * z[static_cast<std::size_t>(right)];
      if (up >= 0) t += precon[kk] * z[static_cast<std::size_t>(up)];
      z[kk] = t * precon[kk];
    }
  }
};

inline double max_abs(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace detail

/// Makes the velocity field discretely divergence free on fluid cells.
/// Solves A p = -div with PCG, then subtracts the pressure gradient from
/// every face between two non-solid cells where at least one side is fluid.
/// Stops once the true residual (= remaining divergence) is <= tolerance.
inline PressureResult pressure_project(MacGrid& grid, double tolerance, int max_iterations) {
  grid.enforce_solid_boundaries();
  detail::PoissonSystem sys(grid);
  const std::size_t n = sys.size();
  PressureResult result;
  result.pressure.assign(grid.cells.size(), 0.0);
  if (n == 0) return result;

  std::vector<double> b(n), p(n, 0.0), r(n), z(n), s(n), as(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = -grid.divergence(sys.ci[k], sys.cj[k]);
  r = b;
  double residual = detail::max_abs(r);
  if (residual > tolerance) {
    detail::MicPreconditioner precon(sys);
    precon.apply(r, z);
    s = z;
    double rho = 0.0;
    for (std::size_t k = 0; k < n; ++k) rho += z[k] * r[k];
    int it = 0;
    for (; it < max_iterations; ++it) {
      sys.apply(s, as);
      double sas = 0.0;
      for (std::size_t k = 0; k < n; ++k) sas += s[k] * as[k];
      if (sas == 0.0) break;
      const double alpha = rho / sas;
      for (std::size_t k = 0; k < n; ++k) {
        p[k] += alpha * s[k];
        r[k] -= alpha * as[k];
      }
      residual = detail::max_abs(r);
      if (residual <= tolerance) {
        // Guard against drift of the recurrence: confirm with the true residual.
        sys.apply(p, as);
        for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - as[k];
        residual = detail::max_abs(r);
        if (residual <= tolerance) break;
      }
      precon.apply(r, z);
      double rho_new = 0.0;
      for (std::size_t k = 0; k < n; ++k) rho_new += z[k] * r[k];
      const double beta = rho_new / rho;
      rho = rho_new;
      for (std::size_t k = 0; k < n; ++k) s[k] = z[k] + beta * s[k];
    }
    result.iterations = it + 1;
    if (residual > tolerance) {
      std::ostringstream os;
      os << "pressure solve did not converge in " << max_iterations << " iterations, residual " << residual;
      throw NumericError(os.str());
    }
  }
  result.max_residual = residual;

  for (std::size_t k = 0; k < n; ++k) result.pressure[grid.cell_index(sys.ci[k], sys.cj[k])] = p[k];
  auto pressure_at = [&](int i, int j) { return grid.in_bounds(i, j) ? result.pressure[grid.cell_index(i, j)] : 0.0; };
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 1; i < grid.nx; ++i) {
      if (grid.is_solid(i - 1, j) || grid.is_solid(i, j)) continue;
      if (!grid.is_fluid(i - 1, j) && !grid.is_fluid(i, j)) continue;
      grid.U(i, j) -= pressure_at(i, j) - pressure_at(i - 1, j);
    }
  for (int j = 1; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      if (grid.is_solid(i, j - 1) || grid.is_solid(i, j)) continue;
      if (!grid.is_fluid(i, j - 1) && !grid.is_fluid(i, j)) continue;
      grid.V(i, j) -= pressure_at(i, j) - pressure_at(i, j - 1);
    }
  return result;
}

}  // namespace gns::flip
