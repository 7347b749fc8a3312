#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "gns/flip/solver.hpp"

namespace gns::flip {
namespace {

SceneSpec quiet_spec() {
  SceneSpec s;
  s.pool_probability = 0.0;
  s.multi_block_probability = 0.0;
  s.obstacle_probability = 0.0;
  s.initial_velocity_probability = 0.0;
  return s;
}

SceneSpec pool_only(int height) {
  SceneSpec s = quiet_spec();
  s.pool_probability = 1.0;
  s.pool_height = {height, height};
  s.single_block_count = 0;
  return s;
}

bool inside_solid(const Scene& sc, Vec2 p) {
  return sc.is_solid(static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y)));
}

TEST(GenerateScene, SingleSmallBlock) {
  SceneSpec s = quiet_spec();
  s.block_size = {2, 2};
  Scene sc = generate_scene(11, s);
  EXPECT_EQ(sc.particles.size(), 16u);
  EXPECT_EQ(sc.particles.fluid_count(), 16u);
  for (auto v : sc.solid) EXPECT_EQ(v, 0);
}

TEST(GenerateScene, PoolFillsBottomRows) {
  Scene sc = generate_scene(3, pool_only(3));
  EXPECT_EQ(sc.particles.fluid_count(), 32u * 3u * 4u);
  for (auto p : sc.particles.positions) {
    EXPECT_GE(p.y, 0.0);
    EXPECT_LT(p.y, 3.0);
  }
}

TEST(GenerateScene, SamplerFrequencies) {
  SceneSpec s;  // table defaults
  int pools = 0, obstacles = 0;
  constexpr int n = 10000;
  for (int seed = 0; seed < n; ++seed) {
    const Scene sc = generate_scene(static_cast<std::uint64_t>(seed), s);
    pools += sc.draw.has_pool;
    obstacles += sc.draw.has_obstacles;
    ASSERT_LE(sc.particles.size(), 1300u);
  }
  EXPECT_NEAR(pools / double(n), 0.3, 0.02);
  EXPECT_NEAR(obstacles / double(n), 0.8, 0.02);
}

TEST(GenerateScene, UnsatisfiableSpec) {
  SceneSpec s = quiet_spec();
  s.block_size = {20, 20};
  s.max_particles = 1000;
  EXPECT_THROW(generate_scene(0, s), ConfigError);
  SceneSpec bad = quiet_spec();
  bad.pool_probability = 1.5;
  EXPECT_THROW(generate_scene(0, bad), ConfigError);
}

TEST(GenerateScene, ObstaclesAreSolidAndParticlesOutside) {
  SceneSpec s;
  s.obstacle_probability = 1.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Scene sc = generate_scene(seed, s);
    int solid = 0;
    for (auto v : sc.solid) solid += v;
    EXPECT_GT(solid, 0);
    for (std::size_t i = 0; i < sc.particles.size(); ++i) {
      if (sc.particles.types[i] == ParticleType::Fluid) {
        EXPECT_FALSE(inside_solid(sc, sc.particles.positions[i]));
      }
    }
  }
}

TEST(PressureProject, DivergenceFreeFieldUnchanged) {
  MacGrid g(6, 6);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 6; ++i) g.cells[g.cell_index(i, j)] = CellFlag::Fluid;
  // A closed circulation around the node shared by cells (1,0), (2,0), (1,1), (2,1).
  g.U(2, 0) = 0.7;
  g.V(2, 1) = 0.7;
  g.U(2, 1) = -0.7;
  g.V(1, 1) = -0.7;
  MacGrid before = g;
  auto r = pressure_project(g, 1e-10, 100);
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(g.u, before.u);
  EXPECT_EQ(g.v, before.v);
}

TEST(PressureProject, SingleFluidCellSurroundedByEmpty) {
  MacGrid g(5, 5);
  g.cells[g.cell_index(2, 2)] = CellFlag::Fluid;
  g.U(2, 2) = 1.0;
  g.U(3, 2) = -0.5;
  g.V(2, 2) = 0.25;
  g.V(2, 3) = 2.0;
  pressure_project(g, 1e-12, 10);
  EXPECT_NEAR(g.divergence(2, 2), 0.0, 1e-14);
}

TEST(PressureProject, MatchesDenseDirectSolve) {
  Rng rng(42);
  int tested = 0;
  for (int trial = 0; trial < 60 && tested < 20; ++trial) {
    MacGrid g(8, 8);
    for (auto& c : g.cells) {
      const double r = uniform(rng, 0, 1);
      c = r < 0.6 ? CellFlag::Fluid : (r < 0.75 ? CellFlag::Solid : CellFlag::Empty);
    }
    for (auto& x : g.u) x = uniform(rng, -1, 1);
    for (auto& x : g.v) x = uniform(rng, -1, 1);
    g.enforce_solid_boundaries();

    // Dense system assembled directly from the flags.
    std::vector<int> id(64, -1);
    int n = 0;
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i)
        if (g.is_fluid(i, j)) id[j * 8 + i] = n++;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd b(n);
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) {
        if (!g.is_fluid(i, j)) continue;
        const int k = id[j * 8 + i];
        b(k) = -g.divergence(i, j);
        const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
        for (int q = 0; q < 4; ++q) {
          const int a = i + di[q], c = j + dj[q];
          if (g.is_solid(a, c)) continue;
          A(k, k) += 1.0;
          if (g.is_fluid(a, c)) A(k, id[c * 8 + a]) -= 1.0;
        }
      }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (n == 0 || !lu.isInvertible()) continue;
    Eigen::VectorXd p = lu.solve(b);

    MacGrid expected = g;
    auto pressure_at = [&](int i, int j) { return (g.in_bounds(i, j) && id[j * 8 + i] >= 0) ? p(id[j * 8 + i]) : 0.0; };
    for (int j = 0; j < 8; ++j)
      for (int i = 1; i < 8; ++i)
        if (!g.is_solid(i - 1, j) && !g.is_solid(i, j) && (g.is_fluid(i - 1, j) || g.is_fluid(i, j)))
          expected.U(i, j) -= pressure_at(i, j) - pressure_at(i - 1, j);
    for (int j = 1; j < 8; ++j)
      for (int i = 0; i < 8; ++i)
        if (!g.is_solid(i, j - 1) && !g.is_solid(i, j) && (g.is_fluid(i, j - 1) || g.is_fluid(i, j)))
          expected.V(i, j) -= pressure_at(i, j) - pressure_at(i, j - 1);

    auto res = pressure_project(g, 1e-12, 1000);
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i)
        if (g.is_fluid(i, j)) {
          EXPECT_NEAR(res.pressure[g.cell_index(i, j)], pressure_at(i, j), 1e-8);
        }
    for (std::size_t k = 0; k < g.u.size(); ++k) EXPECT_NEAR(g.u[k], expected.u[k], 1e-8);
    for (std::size_t k = 0; k < g.v.size(); ++k) EXPECT_NEAR(g.v[k], expected.v[k], 1e-8);
    EXPECT_LT(g.max_fluid_divergence(), 1e-11);
    ++tested;
  }
  EXPECT_GE(tested, 10);
}

TEST(PressureProject, NonConvergenceCarriesResidual) {
  MacGrid g(16, 16);
  for (auto& c : g.cells) c = CellFlag::Fluid;
  g.cells[0] = CellFlag::Empty;
  Rng rng(1);
  for (auto& x : g.v) x = uniform(rng, -1, 1);
  try {
    pressure_project(g, 1e-12, 1);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(FlipStep, IsolatedParticleFreeFalls) {
  Scene sc;
  sc.nx = sc.ny = 32;
  sc.solid.assign(32 * 32, 0);
  sc.particles.positions = {{16.3, 20.6}};
  sc.particles.velocities = {{0, 0}};
  sc.particles.types = {ParticleType::Fluid};
  MacGrid grid(32, 32);
  SimConfig cfg;
  ParticleState ps = sc.particles;
  flip_step(ps, sc, grid, cfg, 0.05);
  EXPECT_NEAR(ps.velocities[0].x, 0.0, 1e-12);
  EXPECT_NEAR(ps.velocities[0].y, -0.4905, 1e-12);
  EXPECT_NEAR(ps.positions[0].x, 16.3, 1e-12);
  EXPECT_NEAR(ps.positions[0].y, 20.6 - 0.05 * 0.4905, 1e-12);
}

TEST(FlipStep, HydrostaticPoolStaysAtRest) {
  SceneSpec s = pool_only(4);
  Scene sc = generate_scene(5, s);
  MacGrid grid(32, 32);
  ParticleState ps = sc.particles;
  SimConfig cfg;
  auto d = flip_step(ps, sc, grid, cfg, 0.05);
  double vmax = 0;
  for (auto v : ps.velocities) vmax = std::max(vmax, v.norm());
  EXPECT_LT(vmax, 1e-3);
  EXPECT_LT(d.max_divergence, cfg.pressure_tolerance);
}

TEST(FlipStep, ParticleNeverEndsInSolid) {
  Scene sc;
  sc.nx = sc.ny = 16;
  sc.solid.assign(16 * 16, 0);
  for (int i = 4; i < 12; ++i) sc.solid[static_cast<std::size_t>(5 * 16 + i)] = 1;
  sc.particles.positions = {{8.2, 6.1}, {7.6, 6.3}};
  sc.particles.velocities = {{0.0, -30.0}, {1.0, -25.0}};
  sc.particles.types = {ParticleType::Fluid, ParticleType::Fluid};
  MacGrid grid(16, 16);
  ParticleState ps = sc.particles;
  for (int k = 0; k < 10; ++k) {
    flip_step(ps, sc, grid, SimConfig{}, 0.05);
    for (auto p : ps.positions) {
      EXPECT_FALSE(inside_solid(sc, p));
      EXPECT_GT(p.x, 0.0);
      EXPECT_LT(p.x, 16.0);
      EXPECT_GT(p.y, 0.0);
      EXPECT_LT(p.y, 16.0);
    }
  }
}

TEST(SimulateTrajectory, RestingPoolBarelyMoves) {
  SceneSpec s = pool_only(5);
  auto rec = simulate_trajectory(8, s, SimConfig{});
  ASSERT_EQ(rec.frames.size(), 400u);
  const auto& first = rec.frames.front();
  double disp = 0;
  for (const auto& f : rec.frames)
    for (std::size_t i = 0; i < f.size(); ++i) disp = std::max(disp, (f[i] - first[i]).norm());
  EXPECT_LT(disp, 0.1);
}

TEST(SimulateTrajectory, DeterministicPerSeed) {
  SceneSpec s;
  s.steps = 60;
  auto a = simulate_trajectory(1234, s, SimConfig{});
  auto b = simulate_trajectory(1234, s, SimConfig{});
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) EXPECT_EQ(a.frames[k], b.frames[k]);
}

TEST(SimulateTrajectory, FallingBlockConservesCountAndStaysContained) {
  SceneSpec s = quiet_spec();
  s.pool_probability = 1.0;
  s.pool_height = {4, 4};
  s.block_size = {10, 10};
  Scene sc = generate_scene(21, s);
  const std::size_t n = sc.particles.size();
  auto rec = simulate_scene(sc, s, SimConfig{});
  ASSERT_EQ(rec.frames.size(), 400u);
  for (const auto& f : rec.frames) {
    ASSERT_EQ(f.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_GT(f[i].x, 0.0);
      ASSERT_LT(f[i].x, 32.0);
      ASSERT_GT(f[i].y, 0.0);
      ASSERT_LT(f[i].y, 32.0);
    }
  }
  EXPECT_LT(rec.max_divergence, 1e-4);
}

}  // namespace
}  // namespace gns::flip
