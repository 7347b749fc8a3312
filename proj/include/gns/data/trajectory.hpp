#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/core/errors.hpp"
#include "gns/core/vec2.hpp"
#include "gns/data/scaling.hpp"
#include "gns/data/stats.hpp"
#include "gns/flip/solver.hpp"

namespace gns::data {

inline constexpr char kTrajectoryMagic[8] = {'G', 'N', 'S', 'T', 'R', 'A', 'J', '\0'};
inline constexpr std::uint32_t kTrajectoryVersion = 1;

/// Simulated sequence in scaled coordinates. Positions are held as doubles
/// but always carry float32-representable values, so an in-memory
/// trajectory and its file agree exactly.
struct Trajectory {
  int domain_x = 32;
  int domain_y = 32;
  double dt = 0.05;
  std::uint64_t seed = 0;
  std::vector<ParticleType> types;
  std::vector<std::vector<Vec2>> frames;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t num_particles() const { return types.size(); }
  std::size_t num_frames() const { return frames.size(); }
  std::size_t fluid_count() const {
    std::size_t n = 0;
    for (auto t : types) n += (t == ParticleType::Fluid);
    return n;
  }
  ScaleMap scale() const { return ScaleMap(domain_x, domain_y); }
  bool boundary_particles() const { return meta.value("boundary_particles", false); }

  void validate() const {
    if (frames.size() < 7) throw DataError("trajectory needs at least 7 frames, has " + std::to_string(frames.size()));
    const ScaleMap s = scale();
    const Vec2 lo = s.lower(), hi = s.upper();
    for (std::size_t f = 0; f < frames.size(); ++f) {
      if (frames[f].size() != types.size()) throw DataError("frame " + std::to_string(f) + " has wrong particle count");
      for (std::size_t i = 0; i < types.size(); ++i) {
        const Vec2 p = frames[f][i];
        if (types[i] != ParticleType::Fluid) continue;
        if (!(p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y)) {
          throw DataError("fluid particle " + std::to_string(i) + " at frame " + std::to_string(f) +
                          " lies outside the scaled domain");
        }
      }
    }
  }
};

inline double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

/// Scales a simulation record into a trajectory, keeping at most `max_frames`.
inline Trajectory make_trajectory(const flip::SimulationRecord& rec, std::size_t max_frames = 0) {
  Trajectory t;
  t.domain_x = rec.nx;
  t.domain_y = rec.ny;
  t.dt = rec.spec.dt;
  t.seed = rec.seed;
  t.types = rec.types;
  const ScaleMap s(rec.nx, rec.ny);
  const std::size_t n = max_frames ? std::min(max_frames, rec.frames.size()) : rec.frames.size();
  t.frames.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    std::vector<Vec2> frame(rec.frames[f].size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
      const Vec2 q = s.to_scaled(rec.frames[f][i]);
      frame[i] = {quantize(q.x), quantize(q.y)};
    }
    t.frames.push_back(std::move(frame));
  }
  nlohmann::json solid = nlohmann::json::array();
  for (auto c : rec.solid) solid.push_back(static_cast<int>(c));
  t.meta = {{"scene_spec", rec.spec},
            {"sim_config", rec.config},
            {"draw", flip::to_json_value(rec.draw)},
            {"max_divergence", rec.max_divergence},
            {"solid", std::move(solid)},
            {"boundary_particles", false}};
  return t;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
}
inline void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string what;

  void need(std::size_t n) {
    if (pos + n > buf.size()) throw DataError(what + ": truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * k);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace detail

/// Layout (little endian): magic[8], u32 version, u32 header length, JSON
/// header, u8 type per particle, then frames x particles x 2 float32.
inline std::string encode_trajectory(const Trajectory& t) {
  nlohmann::json header = {{"domain", {t.domain_x, t.domain_y}},
                           {"dt", t.dt},
                           {"seed", t.seed},
                           {"particles", t.num_particles()},
                           {"frames", t.num_frames()},
                           {"meta", t.meta}};
  const std::string h = header.dump();
  std::string out(kTrajectoryMagic, sizeof(kTrajectoryMagic));
  detail::put_u32(out, kTrajectoryVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (auto ty : t.types) out.push_back(static_cast<char>(ty));
  out.reserve(out.size() + t.num_frames() * t.num_particles() * 8);
  for (const auto& frame : t.frames)
    for (const auto& p : frame) {
      detail::put_f32(out, p.x);
      detail::put_f32(out, p.y);
    }
  return out;
}

inline Trajectory decode_trajectory(const std::string& bytes, const std::string& what = "trajectory") {
  detail::Reader r{bytes, 0, what};
  if (r.bytes(sizeof(kTrajectoryMagic)) != std::string(kTrajectoryMagic, sizeof(kTrajectoryMagic))) {
    throw DataError(what + ": not a trajectory file");
  }
  const std::uint32_t version = r.u32();
  if (version != kTrajectoryVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(r.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": bad header: " + e.what());
  }
  Trajectory t;
  t.domain_x = header.at("domain").at(0).get<int>();
  t.domain_y = header.at("domain").at(1).get<int>();
  t.dt = header.at("dt").get<double>();
  t.seed = header.at("seed").get<std::uint64_t>();
  t.meta = header.at("meta");
  const auto n = header.at("particles").get<std::size_t>();
  const auto nf = header.at("frames").get<std::size_t>();
  const std::string types = r.bytes(n);
  for (char c : types) {
    if (static_cast<unsigned char>(c) >= kNumParticleTypes) throw DataError(what + ": unknown particle type");
    t.types.push_back(static_cast<ParticleType>(c));
  }
  r.need(nf * n * 8);
  t.frames.assign(nf, std::vector<Vec2>(n));
  for (auto& frame : t.frames)
    for (auto& p : frame) {
      p.x = r.f32();
      p.y = r.f32();
    }
  if (r.pos != bytes.size()) throw DataError(what + ": trailing bytes");
  return t;
}

inline void save_trajectory(const std::filesystem::path& path, const Trajectory& t) {
  detail::write_file(path, encode_trajectory(t));
}
inline Trajectory load_trajectory(const std::filesystem::path& path) {
  Trajectory t = decode_trajectory(detail::read_file(path), path.string());
  t.validate();
  return t;
}

/// Velocity history v[t-4..t] and target acceleration a[t] for every particle,
/// with v[k] = p[k] - p[k-1] and a[t] = v[t+1] - v[t].
struct Kinematics {
  std::vector<std::vector<Vec2>> velocities;  // 5 entries, oldest first
  std::vector<Vec2> acceleration;
};

inline Kinematics finite_difference_kinematics(const Trajectory& traj, std::size_t t) {
  if (t < 5 || t + 2 > traj.num_frames()) {
    throw ContractError("finite_difference_kinematics: frame " + std::to_string(t) + " outside [5, " +
                        std::to_string(traj.num_frames()) + " - 2]");
  }
  const std::size_t n = traj.num_particles();
  Kinematics k;
  k.velocities.assign(5, std::vector<Vec2>(n));
  for (std::size_t h = 0; h < 5; ++h) {
    const std::size_t f = t - 4 + h;
    for (std::size_t i = 0; i < n; ++i) k.velocities[h][i] = traj.frames[f][i] - traj.frames[f - 1][i];
  }
  k.acceleration.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 v_next = traj.frames[t + 1][i] - traj.frames[t][i];
    k.acceleration[i] = v_next - k.velocities[4][i];
  }
  return k;
}

/// Accumulates every per-step velocity and acceleration of the fluid particles.
inline NormStats trajectory_stats(const Trajectory& traj) {
  NormStats s;
  const auto& F = traj.frames;
  for (std::size_t f = 1; f < F.size(); ++f)
    for (std::size_t i = 0; i < traj.num_particles(); ++i) {
      if (traj.types[i] != ParticleType::Fluid) continue;
      const Vec2 v = F[f][i] - F[f - 1][i];
      s.velocity.add(v);
      if (f + 1 < F.size()) s.acceleration.add((F[f + 1][i] - F[f][i]) - v);
    }
  return s;
}

/// Wall positions in grid units, `spacing` apart, walking the boundary
/// counter-clockwise from the origin with half-open sides so each corner
/// appears once.
inline std::vector<Vec2> wall_points(double width, double height, double spacing) {
  if (!(spacing > 0.0)) throw ConfigError("boundary spacing must be positive");
  std::vector<Vec2> pts;
  const auto nx = static_cast<std::size_t>(std::llround(width / spacing));
  const auto ny = static_cast<std::size_t>(std::llround(height / spacing));
  const double sx = width / static_cast<double>(nx), sy = height / static_cast<double>(ny);
  for (std::size_t k = 0; k < nx; ++k) pts.push_back({k * sx, 0.0});
  for (std::size_t k = 0; k < ny; ++k) pts.push_back({width, k * sy});
  for (std::size_t k = 0; k < nx; ++k) pts.push_back({width - k * sx, height});
  for (std::size_t k = 0; k < ny; ++k) pts.push_back({0.0, height - k * sy});
  return pts;
}

/// Appends static Obstacle particles along the four walls. Obstacles inside
/// the domain are already particle-represented by the generator.
inline Trajectory add_boundary_particles(const Trajectory& traj, double spacing = 1.0) {
  if (traj.boundary_particles()) return traj;
  Trajectory out = traj;
  const ScaleMap s = traj.scale();
  std::vector<Vec2> walls;
  for (Vec2 p : wall_points(traj.domain_x, traj.domain_y, spacing)) {
    const Vec2 q = s.to_scaled(p);
    walls.push_back({quantize(q.x), quantize(q.y)});
  }
  out.types.insert(out.types.end(), walls.size(), ParticleType::Obstacle);
  for (auto& frame : out.frames) frame.insert(frame.end(), walls.begin(), walls.end());
  out.meta["boundary_particles"] = true;
  out.meta["boundary_spacing"] = spacing;
  out.meta["boundary_particle_count"] = walls.size();
  return out;
}

}  // namespace gns::data
