#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "gns/core/errors.hpp"
#include "gns/core/rng.hpp"
#include "gns/core/vec2.hpp"

namespace gns::flip {

struct IntRange {
  int lo = 0;
  int hi = 0;
};
struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(IntRange, lo, hi)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RealRange, lo, hi)

/// Randomized scene distribution. Defaults reproduce the data-set table:
/// pools, one or several liquid blocks, rotated elongated obstacles and an
/// optional initial block velocity.
struct SceneSpec {
  double pool_probability = 0.3;
  IntRange pool_height{3, 8};
  IntRange block_size{2, 20};
  double multi_block_probability = 0.3;
  IntRange block_count{2, 3};
  int single_block_count = 1;  // blocks placed when the multi-block draw fails
  double obstacle_probability = 0.8;
  IntRange obstacle_count{1, 5};
  IntRange obstacle_length{2, 20};
  RealRange obstacle_rotation_deg{0.0, 90.0};
  double obstacle_thickness = 1.5;
  double initial_velocity_probability = 0.3;
  RealRange initial_velocity{-5.0, 5.0};
  int domain_x = 32;
  int domain_y = 32;
  int max_particles = 1300;
  int steps = 400;
  double dt = 0.05;
  int particles_per_cell = 4;
  double jitter = 0.1;  // fraction of the sub-cell spacing
  int max_resample_attempts = 10000;

  void validate() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
    };
    auto range = [](auto r, const char* what) {
      if (r.lo > r.hi) throw ConfigError(std::string(what) + ": lower bound exceeds upper bound");
    };
    prob(pool_probability, "pool_probability");
    prob(multi_block_probability, "multi_block_probability");
    prob(obstacle_probability, "obstacle_probability");
    prob(initial_velocity_probability, "initial_velocity_probability");
    range(pool_height, "pool_height");
    range(block_size, "block_size");
    range(block_count, "block_count");
    range(obstacle_count, "obstacle_count");
    range(obstacle_length, "obstacle_length");
    range(obstacle_rotation_deg, "obstacle_rotation_deg");
    range(initial_velocity, "initial_velocity");
    if (domain_x <= 0 || domain_y <= 0) throw ConfigError("domain must be positive");
    if (steps < 1 || !(dt > 0.0)) throw ConfigError("steps and dt must be positive");
    const int k = static_cast<int>(std::lround(std::sqrt(particles_per_cell)));
    if (particles_per_cell < 1 || k * k != particles_per_cell) {
      throw ConfigError("particles_per_cell must be a perfect square");
    }
    if (block_size.lo < 1 || pool_height.lo < 0 || single_block_count < 0) throw ConfigError("bad block/pool bounds");
    if (block_size.hi > std::min(domain_x, domain_y) || pool_height.hi > domain_y) {
      throw ConfigError("blocks or pool do not fit in the domain");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SceneSpec, pool_probability, pool_height, block_size,
                                                multi_block_probability, block_count, single_block_count,
                                                obstacle_probability, obstacle_count, obstacle_length,
                                                obstacle_rotation_deg, obstacle_thickness,
                                                initial_velocity_probability, initial_velocity, domain_x, domain_y,
                                                max_particles, steps, dt, particles_per_cell, jitter,
                                                max_resample_attempts)

struct ParticleState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<ParticleType> types;

  std::size_t size() const { return positions.size(); }
  std::size_t fluid_count() const {
    std::size_t n = 0;
    for (auto t : types) n += (t == ParticleType::Fluid);
    return n;
  }
};

/// Draw record kept with each scene so trajectories can echo what was sampled.
struct SceneDraw {
  bool has_pool = false;
  int pool_height = 0;
  int block_count = 0;
  bool has_obstacles = false;
  int obstacle_count = 0;
  bool has_initial_velocity = false;
  Vec2 initial_velocity{};
  int attempts = 1;
};

struct Scene {
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> solid;  // per cell
  ParticleState particles;
  SceneDraw draw;

  bool is_solid(int i, int j) const {
    if (i < 0 || j < 0 || i >= nx || j >= ny) return true;
    return solid[static_cast<std::size_t>(j * nx + i)] != 0;
  }
};

inline nlohmann::json to_json_value(const SceneDraw& d) {
  return {{"has_pool", d.has_pool},
          {"pool_height", d.pool_height},
          {"block_count", d.block_count},
          {"has_obstacles", d.has_obstacles},
          {"obstacle_count", d.obstacle_count},
          {"has_initial_velocity", d.has_initial_velocity},
          {"initial_velocity", {d.initial_velocity.x, d.initial_velocity.y}},
          {"attempts", d.attempts}};
}

/// Marks cells whose centers fall inside a rotated rectangle.
inline void rasterize_obstacle(std::vector<std::uint8_t>& solid, int nx, int ny, Vec2 center, double length,
                               double thickness, double angle_deg) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  const Vec2 dir{std::cos(a), std::sin(a)};
  const Vec2 perp{-dir.y, dir.x};
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec2 d = Vec2{i + 0.5, j + 0.5} - center;
      if (std::abs(d.dot(dir)) <= 0.5 * length && std::abs(d.dot(perp)) <= 0.5 * thickness) {
        solid[static_cast<std::size_t>(j * nx + i)] = 1;
      }
    }
}

/// Samples a scene. The Bernoulli decisions (pool, multiple blocks,
/// obstacles, initial velocity) are drawn once per seed; sizes and
/// placements are redrawn from successive sub-seeds until the fluid particle
/// count is within max_particles.
inline Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  const int ppc = spec.particles_per_cell;
  const int min_blocks_cells = spec.single_block_count * spec.block_size.lo * spec.block_size.lo;
  const int min_pool_cells = spec.pool_probability >= 1.0 ? spec.pool_height.lo * spec.domain_x : 0;
  if ((min_blocks_cells + min_pool_cells) * ppc > spec.max_particles) {
    throw ConfigError("scene spec is unsatisfiable: minimal configuration exceeds max_particles");
  }

  Rng decide = make_rng(seed, {0});
  SceneDraw draw;
  draw.has_pool = bernoulli(decide, spec.pool_probability);
  const bool multi = bernoulli(decide, spec.multi_block_probability);
  draw.has_obstacles = bernoulli(decide, spec.obstacle_probability);
  draw.has_initial_velocity = bernoulli(decide, spec.initial_velocity_probability);

  const int nx = spec.domain_x, ny = spec.domain_y;
  for (int attempt = 1; attempt <= spec.max_resample_attempts; ++attempt) {
    Rng rng = make_rng(seed, {1, static_cast<std::uint64_t>(attempt)});
    Scene scene;
    scene.nx = nx;
    scene.ny = ny;
    scene.solid.assign(static_cast<std::size_t>(nx * ny), 0);
    scene.draw = draw;
    scene.draw.attempts = attempt;

    if (draw.has_obstacles) {
      scene.draw.obstacle_count = uniform_int(rng, spec.obstacle_count.lo, spec.obstacle_count.hi);
      for (int k = 0; k < scene.draw.obstacle_count; ++k) {
        const int length = uniform_int(rng, spec.obstacle_length.lo, spec.obstacle_length.hi);
        const double angle = uniform(rng, spec.obstacle_rotation_deg.lo, spec.obstacle_rotation_deg.hi);
        const Vec2 center{uniform(rng, 0.0, nx), uniform(rng, 0.0, ny)};
        rasterize_obstacle(scene.solid, nx, ny, center, length, spec.obstacle_thickness, angle);
      }
    }

    // 0 = empty, 1 = pool, 2 = block
    std::vector<std::uint8_t> liquid(static_cast<std::size_t>(nx * ny), 0);
    int pool_h = 0;
    if (draw.has_pool) {
      pool_h = uniform_int(rng, spec.pool_height.lo, spec.pool_height.hi);
      for (int j = 0; j < pool_h; ++j)
        for (int i = 0; i < nx; ++i) liquid[static_cast<std::size_t>(j * nx + i)] = 1;
    }
    scene.draw.pool_height = pool_h;
    scene.draw.block_count =
        multi ? uniform_int(rng, spec.block_count.lo, spec.block_count.hi) : spec.single_block_count;
    for (int b = 0; b < scene.draw.block_count; ++b) {
      const int w = uniform_int(rng, spec.block_size.lo, spec.block_size.hi);
      const int h = uniform_int(rng, spec.block_size.lo, spec.block_size.hi);
      const int x0 = uniform_int(rng, 0, nx - w);
      const int y_lo = pool_h <= ny - h ? pool_h : 0;
      const int y0 = uniform_int(rng, y_lo, ny - h);
      for (int j = y0; j < y0 + h; ++j)
        for (int i = x0; i < x0 + w; ++i) liquid[static_cast<std::size_t>(j * nx + i)] = 2;
    }
    if (draw.has_initial_velocity) {
      scene.draw.initial_velocity = {uniform(rng, spec.initial_velocity.lo, spec.initial_velocity.hi),
                                     uniform(rng, spec.initial_velocity.lo, spec.initial_velocity.hi)};
    }

    int fluid_cells = 0, solid_cells = 0;
    for (std::size_t c = 0; c < liquid.size(); ++c) {
      if (scene.solid[c]) ++solid_cells;
      else if (liquid[c]) ++fluid_cells;
    }
    const int fluid_particles = fluid_cells * ppc;
    if (fluid_particles == 0 || fluid_particles + solid_cells > spec.max_particles) continue;

    const int k = static_cast<int>(std::lround(std::sqrt(ppc)));
    const double sub = 1.0 / k;
    const double jit = spec.jitter * sub;
    auto& ps = scene.particles;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const auto c = static_cast<std::size_t>(j * nx + i);
        if (!liquid[c] || scene.solid[c]) continue;
        const Vec2 vel = liquid[c] == 2 ? scene.draw.initial_velocity : Vec2{};
        for (int b = 0; b < k; ++b)
          for (int a = 0; a < k; ++a) {
            const double x = i + (a + 0.5) * sub + uniform(rng, -jit, jit);
            const double y = j + (b + 0.5) * sub + uniform(rng, -jit, jit);
            ps.positions.push_back({x, y});
            ps.velocities.push_back(vel);
            ps.types.push_back(ParticleType::Fluid);
          }
      }
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (scene.solid[static_cast<std::size_t>(j * nx + i)]) {
          ps.positions.push_back({i + 0.5, j + 0.5});
          ps.velocities.push_back({});
          ps.types.push_back(ParticleType::Obstacle);
        }
    return scene;
  }
  throw ConfigError("scene spec is unsatisfiable: no draw within max_particles after " +
                    std::to_string(spec.max_resample_attempts) + " attempts");
}

}  // namespace gns::flip
