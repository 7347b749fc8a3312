#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "gns/flip/mac_grid.hpp"
#include "gns/flip/pressure.hpp"
#include "gns/flip/scene.hpp"

namespace gns::flip {

struct SimConfig {
  Vec2 gravity{0.0, -9.81};  // grid units / s^2
  double flip_blend = 0.97;
  double pressure_tolerance = 1e-4;
  int max_pressure_iterations = 2000;
  int extrapolation_layers = 4;
  double wall_margin = 1e-3;  // keep-out distance from walls and solid cells

  void validate() const {
    if (!(flip_blend >= 0.0 && flip_blend <= 1.0)) throw ConfigError("flip_blend must lie in [0, 1]");
    if (!(pressure_tolerance > 0.0) || max_pressure_iterations < 1) throw ConfigError("bad pressure solver settings");
    if (extrapolation_layers < 0 || !(wall_margin > 0.0 && wall_margin < 0.5)) throw ConfigError("bad margins");
  }
};

inline void to_json(nlohmann::json& j, const SimConfig& c) {
  j = {{"gravity", {c.gravity.x, c.gravity.y}},
       {"flip_blend", c.flip_blend},
       {"pressure_tolerance", c.pressure_tolerance},
       {"max_pressure_iterations", c.max_pressure_iterations},
       {"extrapolation_layers", c.extrapolation_layers},
       {"wall_margin", c.wall_margin}};
}
inline void from_json(const nlohmann::json& j, SimConfig& c) {
  if (j.contains("gravity")) c.gravity = {j.at("gravity").at(0).get<double>(), j.at("gravity").at(1).get<double>()};
  c.flip_blend = j.value("flip_blend", c.flip_blend);
  c.pressure_tolerance = j.value("pressure_tolerance", c.pressure_tolerance);
  c.max_pressure_iterations = j.value("max_pressure_iterations", c.max_pressure_iterations);
  c.extrapolation_layers = j.value("extrapolation_layers", c.extrapolation_layers);
  c.wall_margin = j.value("wall_margin", c.wall_margin);
}

struct StepDiagnostics {
  int pressure_iterations = 0;
  double max_divergence = 0.0;  // after projection, over fluid cells
};

namespace detail {

/// Spreads fluid particle velocities onto faces with bilinear weights.
/// Returns the per-face weight so callers can tell which faces saw particles.
inline void particles_to_grid(const ParticleState& ps, MacGrid& grid, std::vector<double>& wu, std::vector<double>& wv) {
  std::fill(grid.u.begin(), grid.u.end(), 0.0);
  std::fill(grid.v.begin(), grid.v.end(), 0.0);
  wu.assign(grid.u.size(), 0.0);
  wv.assign(grid.v.size(), 0.0);
  auto splat = [](std::vector<double>& f, std::vector<double>& w, int width, int height, double x, double y,
                  double value) {
    const auto s = MacGrid::stencil(width, height, x, y);
    const int i1 = std::min(s.i0 + 1, width - 1), j1 = std::min(s.j0 + 1, height - 1);
    const double ws[4] = {(1 - s.fx) * (1 - s.fy), s.fx * (1 - s.fy), (1 - s.fx) * s.fy, s.fx * s.fy};
    const int is[4] = {s.i0, i1, s.i0, i1}, js[4] = {s.j0, s.j0, j1, j1};
    for (int k = 0; k < 4; ++k) {
      const auto idx = static_cast<std::size_t>(js[k] * width + is[k]);
      f[idx] += ws[k] * value;
      w[idx] += ws[k];
    }
  };
  for (std::size_t p = 0; p < ps.size(); ++p) {
    if (ps.types[p] != ParticleType::Fluid) continue;
    const Vec2 x = ps.positions[p], vel = ps.velocities[p];
    splat(grid.u, wu, grid.nx + 1, grid.ny, x.x, x.y - 0.5, vel.x);
    splat(grid.v, wv, grid.nx, grid.ny + 1, x.x - 0.5, x.y, vel.y);
  }
  for (std::size_t k = 0; k < grid.u.size(); ++k)
    if (wu[k] > 0.0) grid.u[k] /= wu[k];
  for (std::size_t k = 0; k < grid.v.size(); ++k)
    if (wv[k] > 0.0) grid.v[k] /= wv[k];
}

/// Fills faces outside `valid` with the mean of valid 4-neighbours, one
/// layer per sweep.
inline void extrapolate(std::vector<double>& f, std::vector<std::uint8_t> valid, int width, int height, int layers) {
  for (int layer = 0; layer < layers; ++layer) {
    std::vector<std::uint8_t> next = valid;
    bool changed = false;
    for (int j = 0; j < height; ++j)
      for (int i = 0; i < width; ++i) {
        const auto idx = static_cast<std::size_t>(j * width + i);
        if (valid[idx]) continue;
        double s = 0.0;
        int n = 0;
        const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int a = i + di[k], b = j + dj[k];
          if (a < 0 || b < 0 || a >= width || b >= height) continue;
          const auto nidx = static_cast<std::size_t>(b * width + a);
          if (valid[nidx]) {
            s += f[nidx];
            ++n;
          }
        }
        if (n > 0) {
          f[idx] = s / n;
          next[idx] = 1;
          changed = true;
        }
      }
    valid.swap(next);
    if (!changed) break;
  }
}

inline void extrapolate_from_weights(MacGrid& grid, const std::vector<double>& wu, const std::vector<double>& wv,
                                     int layers) {
  std::vector<std::uint8_t> vu(wu.size()), vv(wv.size());
  for (std::size_t k = 0; k < wu.size(); ++k) vu[k] = wu[k] > 0.0;
  for (std::size_t k = 0; k < wv.size(); ++k) vv[k] = wv[k] > 0.0;
  extrapolate(grid.u, std::move(vu), grid.nx + 1, grid.ny, layers);
  extrapolate(grid.v, std::move(vv), grid.nx, grid.ny + 1, layers);
}

/// Valid faces after projection: those bordering at least one fluid cell.
inline void extrapolate_from_fluid(MacGrid& grid, int layers) {
  std::vector<std::uint8_t> vu(grid.u.size(), 0), vv(grid.v.size(), 0);
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i <= grid.nx; ++i) vu[grid.u_index(i, j)] = grid.is_fluid(i - 1, j) || grid.is_fluid(i, j);
  for (int j = 0; j <= grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) vv[grid.v_index(i, j)] = grid.is_fluid(i, j - 1) || grid.is_fluid(i, j);
  extrapolate(grid.u, std::move(vu), grid.nx + 1, grid.ny, layers);
  extrapolate(grid.v, std::move(vv), grid.nx, grid.ny + 1, layers);
}

inline int cell_of(double x) { return static_cast<int>(std::floor(x)); }

/// Moves a point out of solid cells into the closest non-solid cell and
/// inside the domain, keeping `margin` from every blocked face.
inline Vec2 resolve_solids(const Scene& scene, Vec2 p, double margin) {
  const double W = scene.nx, H = scene.ny;
  p.x = std::clamp(p.x, margin, W - margin);
  p.y = std::clamp(p.y, margin, H - margin);
  const int ci = std::clamp(cell_of(p.x), 0, scene.nx - 1), cj = std::clamp(cell_of(p.y), 0, scene.ny - 1);
  if (!scene.is_solid(ci, cj)) return p;
  double best = 1e300;
  Vec2 out = p;
  const int max_r = std::max(scene.nx, scene.ny);
  for (int r = 1; r <= max_r; ++r) {
    for (int dj = -r; dj <= r; ++dj)
      for (int di = -r; di <= r; ++di) {
        if (std::max(std::abs(di), std::abs(dj)) != r) continue;
        const int i = ci + di, j = cj + dj;
        if (scene.is_solid(i, j)) continue;
        const Vec2 q{std::clamp(p.x, i + margin, i + 1 - margin), std::clamp(p.y, j + margin, j + 1 - margin)};
        const double d = (q - p).norm();
        if (d < best) {
          best = d;
          out = q;
        }
      }
    // Any cell in a farther ring is at least r cells away.
    if (best <= r) break;
  }
  return out;
}

}  // namespace detail

/// Marks fluid cells from particle occupancy on top of the static solid mask.
inline void classify_cells(const Scene& scene, const ParticleState& ps, MacGrid& grid) {
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i)
      grid.cells[grid.cell_index(i, j)] = scene.is_solid(i, j) ? CellFlag::Solid : CellFlag::Empty;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    if (ps.types[p] != ParticleType::Fluid) continue;
    const int i = std::clamp(detail::cell_of(ps.positions[p].x), 0, grid.nx - 1);
    const int j = std::clamp(detail::cell_of(ps.positions[p].y), 0, grid.ny - 1);
    auto& c = grid.cells[grid.cell_index(i, j)];
    if (c != CellFlag::Solid) c = CellFlag::Fluid;
  }
}

/// One FLIP/PIC step of length dt. Obstacle particles are left untouched.
inline StepDiagnostics flip_step(ParticleState& ps, const Scene& scene, MacGrid& grid, const SimConfig& cfg, double dt) {
  std::vector<double> wu, wv;
  detail::particles_to_grid(ps, grid, wu, wv);
  classify_cells(scene, ps, grid);
  detail::extrapolate_from_weights(grid, wu, wv, cfg.extrapolation_layers);
  grid.enforce_solid_boundaries();
  const std::vector<double> u_old = grid.u, v_old = grid.v;

  for (auto& x : grid.u) x += cfg.gravity.x * dt;
  for (auto& x : grid.v) x += cfg.gravity.y * dt;
  grid.enforce_solid_boundaries();
  const PressureResult pr = pressure_project(grid, cfg.pressure_tolerance, cfg.max_pressure_iterations);
  StepDiagnostics diag{pr.iterations, grid.max_fluid_divergence()};
  detail::extrapolate_from_fluid(grid, cfg.extrapolation_layers);
  grid.enforce_solid_boundaries();

  MacGrid delta = grid;
  for (std::size_t k = 0; k < delta.u.size(); ++k) delta.u[k] = grid.u[k] - u_old[k];
  for (std::size_t k = 0; k < delta.v.size(); ++k) delta.v[k] = grid.v[k] - v_old[k];

  for (std::size_t p = 0; p < ps.size(); ++p) {
    if (ps.types[p] != ParticleType::Fluid) continue;
    Vec2 x = ps.positions[p];
    const Vec2 pic = grid.velocity(x);
    const Vec2 flip = ps.velocities[p] + delta.velocity(x);
    ps.velocities[p] = cfg.flip_blend * flip + (1.0 - cfg.flip_blend) * pic;

    const Vec2 mid = x + (0.5 * dt) * grid.velocity(x);
    x = x + dt * grid.velocity(mid);
    if (!std::isfinite(x.x) || !std::isfinite(x.y)) {
      std::ostringstream os;
      os << "simulation diverged: particle " << p << " reached a non-finite position";
      throw NumericError(os.str());
    }
    ps.positions[p] = detail::resolve_solids(scene, x, cfg.wall_margin);
  }
  return diag;
}

/// A simulated sequence in grid units; frame k is the state after k+1 steps.
struct SimulationRecord {
  std::uint64_t seed = 0;
  SceneSpec spec;
  SimConfig config;
  SceneDraw draw;
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> solid;
  std::vector<ParticleType> types;
  std::vector<std::vector<Vec2>> frames;
  double max_divergence = 0.0;  // worst post-projection residual over all steps
};

inline SimulationRecord simulate_scene(Scene scene, const SceneSpec& spec, const SimConfig& cfg, std::uint64_t seed = 0) {
  cfg.validate();
  SimulationRecord rec;
  rec.seed = seed;
  rec.spec = spec;
  rec.config = cfg;
  rec.draw = scene.draw;
  rec.nx = scene.nx;
  rec.ny = scene.ny;
  rec.solid = scene.solid;
  rec.types = scene.particles.types;
  rec.frames.reserve(static_cast<std::size_t>(spec.steps));
  MacGrid grid(scene.nx, scene.ny);
  ParticleState ps = scene.particles;
  for (int s = 0; s < spec.steps; ++s) {
    const auto d = flip_step(ps, scene, grid, cfg, spec.dt);
    rec.max_divergence = std::max(rec.max_divergence, d.max_divergence);
    rec.frames.push_back(ps.positions);
  }
  return rec;
}

inline SimulationRecord simulate_trajectory(std::uint64_t seed, const SceneSpec& spec, const SimConfig& cfg) {
  return simulate_scene(generate_scene(seed, spec), spec, cfg, seed);
}

}  // namespace gns::flip
