#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/core/parallel.hpp"
#include "gns/core/rng.hpp"
#include "gns/data/manifest.hpp"

namespace gns::data {

struct GenerateConfig {
  std::size_t count = 20;
  std::size_t frames = 100;
  std::uint64_t seed = 0;
  flip::SceneSpec scene;
  flip::SimConfig sim;
  BoundaryMode boundary = BoundaryMode::Distance;
  double boundary_spacing = 1.0;
  std::size_t jobs = 1;

  static GenerateConfig desk() { return {}; }
  static GenerateConfig paper() {
    GenerateConfig c;
    c.count = 2000;
    c.frames = 400;
    return c;
  }
};

inline std::uint64_t trajectory_seed(std::uint64_t base, std::size_t index) { return derive_seed(base, {index}); }

inline std::string trajectory_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%05zu.bin", index);
  return buf;
}

/// Simulates `count` seeded scenes (in parallel, results in index order).
inline std::vector<Trajectory> generate_trajectories(const GenerateConfig& cfg) {
  if (cfg.count == 0) throw ConfigError("dataset needs at least one trajectory");
  if (cfg.frames < 7) throw ConfigError("trajectories need at least 7 frames");
  flip::SceneSpec spec = cfg.scene;
  spec.steps = static_cast<int>(cfg.frames);
  spec.validate();
  std::vector<Trajectory> trajs(cfg.count);
  parallel_for(cfg.count, cfg.jobs, [&](std::size_t i) {
    Trajectory t = make_trajectory(flip::simulate_trajectory(trajectory_seed(cfg.seed, i), spec, cfg.sim), cfg.frames);
    if (cfg.boundary == BoundaryMode::Particles) t = add_boundary_particles(t, cfg.boundary_spacing);
    trajs[i] = std::move(t);
  });
  return trajs;
}

inline nlohmann::json generator_json(const GenerateConfig& cfg) {
  flip::SceneSpec spec = cfg.scene;
  spec.steps = static_cast<int>(cfg.frames);
  return {{"count", cfg.count}, {"frames", cfg.frames}, {"seed", cfg.seed}, {"scene", spec}, {"sim", cfg.sim}};
}

/// Writes trajectories and the manifest into `dir`, which must be absent or
/// empty unless `force`.
inline Dataset generate_dataset(const std::filesystem::path& dir, const GenerateConfig& cfg, bool force = false) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw ConfigError("output directory " + dir.string() + " exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  Dataset d;
  d.trajectories = generate_trajectories(cfg);
  std::vector<std::string> files;
  for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
    files.push_back(trajectory_file_name(i));
    save_trajectory(dir / files.back(), d.trajectories[i]);
  }
  d.manifest = make_manifest(d.trajectories, files, cfg.boundary, cfg.boundary_spacing, generator_json(cfg));
  save_manifest(dir, d.manifest);
  return d;
}

}  // namespace gns::data
