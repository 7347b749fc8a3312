#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/data/stats.hpp"
#include "gns/data/trajectory.hpp"

namespace gns::data {

inline constexpr int kManifestVersion = 1;

enum class BoundaryMode { Distance, Particles };

inline std::string to_string(BoundaryMode m) { return m == BoundaryMode::Particles ? "particles" : "distance"; }
inline BoundaryMode boundary_mode_from_string(const std::string& s) {
  if (s == "distance") return BoundaryMode::Distance;
  if (s == "particles") return BoundaryMode::Particles;
  throw ConfigError("unknown boundary mode '" + s + "' (expected distance or particles)");
}

struct DatasetManifest {
  std::vector<std::string> files;  // relative to the manifest directory
  NormStats stats;
  int domain_x = 32;
  int domain_y = 32;
  BoundaryMode boundary = BoundaryMode::Distance;
  double boundary_spacing = 1.0;
  nlohmann::json generator = nlohmann::json::object();  // spec echo, seeds, frame count
};

inline nlohmann::json to_json_value(const DatasetManifest& m) {
  const ScaleMap s(m.domain_x, m.domain_y);
  return {{"format", "gns-dataset"},
          {"version", kManifestVersion},
          {"files", m.files},
          {"domain", {m.domain_x, m.domain_y}},
          {"scaling", {{"x", {ScaleMap::lo, ScaleMap::x_hi}}, {"y", {ScaleMap::lo, s.y_hi()}}}},
          {"boundary", to_string(m.boundary)},
          {"boundary_spacing", m.boundary_spacing},
          {"stats", to_json_value(m.stats)},
          {"generator", m.generator}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "gns-dataset") throw DataError("manifest: not a dataset manifest");
  if (j.value("version", 0) != kManifestVersion) throw DataError("manifest: unsupported version");
  DatasetManifest m;
  m.files = j.at("files").get<std::vector<std::string>>();
  m.domain_x = j.at("domain").at(0).get<int>();
  m.domain_y = j.at("domain").at(1).get<int>();
  m.boundary = boundary_mode_from_string(j.at("boundary").get<std::string>());
  m.boundary_spacing = j.value("boundary_spacing", 1.0);
  m.stats = norm_stats_from_json(j.at("stats"));
  m.generator = j.value("generator", nlohmann::json::object());
  return m;
}

inline constexpr const char* kManifestName = "manifest.json";

inline void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  detail::write_file(dir / kManifestName, to_json_value(m).dump(2) + "\n");
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
  try {
    return manifest_from_json(nlohmann::json::parse(detail::read_file(dir / kManifestName)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest in " + dir.string() + ": " + e.what());
  }
}

/// Per-file statistics merged in list order. Used both at generation time and
/// when verifying a manifest, so the two agree bit for bit.
inline NormStats combined_stats(const std::vector<Trajectory>& trajs) {
  NormStats total;
  for (const auto& t : trajs) total.merge(trajectory_stats(t));
  return total;
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trajectory> trajectories;

  Normalizer normalizer() const { return Normalizer::from(manifest.stats); }
};

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = load_manifest(dir);
  for (const auto& f : d.manifest.files) d.trajectories.push_back(load_trajectory(dir / f));
  const bool want = d.manifest.boundary == BoundaryMode::Particles;
  for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
    if (d.trajectories[i].boundary_particles() != want) {
      throw DataError("trajectory " + d.manifest.files[i] + " does not match the manifest boundary mode");
    }
  }
  return d;
}

/// Builds the manifest for in-memory trajectories.
inline DatasetManifest make_manifest(const std::vector<Trajectory>& trajs, std::vector<std::string> files,
                                     BoundaryMode mode, double spacing, nlohmann::json generator = {}) {
  if (trajs.empty()) throw DataError("dataset has no trajectories");
  DatasetManifest m;
  m.files = std::move(files);
  m.domain_x = trajs.front().domain_x;
  m.domain_y = trajs.front().domain_y;
  m.boundary = mode;
  m.boundary_spacing = spacing;
  m.stats = combined_stats(trajs);
  m.generator = generator.is_null() ? nlohmann::json::object() : std::move(generator);
  return m;
}

/// Switches an in-memory dataset to the wall-particle representation.
/// Statistics are unchanged because they cover fluid particles only.
inline Dataset with_boundary_particles(const Dataset& d, double spacing = 1.0) {
  Dataset out = d;
  if (d.manifest.boundary == BoundaryMode::Particles) return out;
  for (auto& t : out.trajectories) t = add_boundary_particles(t, spacing);
  out.manifest.boundary = BoundaryMode::Particles;
  out.manifest.boundary_spacing = spacing;
  return out;
}

inline Dataset make_dataset(std::vector<Trajectory> trajs, BoundaryMode mode = BoundaryMode::Distance,
                            double spacing = 1.0) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < trajs.size(); ++i) names.push_back("traj_" + std::to_string(i) + ".bin");
  if (mode == BoundaryMode::Particles)
    for (auto& t : trajs) t = add_boundary_particles(t, spacing);
  Dataset d;
  d.manifest = make_manifest(trajs, names, mode, spacing);
  d.trajectories = std::move(trajs);
  return d;
}

}  // namespace gns::data
