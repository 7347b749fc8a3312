#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/core/optim.hpp"
#include "gns/data/manifest.hpp"
#include "gns/train/checkpoint.hpp"
#include "gns/train/losses.hpp"

namespace gns::train {

enum class Variant { OneStep, OneStepNoise, OneStepNoiseBounded, TwoStepScratch, TwoStepInitialized };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::OneStep: return "1s";
    case Variant::OneStepNoise: return "1sn";
    case Variant::OneStepNoiseBounded: return "1snb";
    case Variant::TwoStepScratch: return "2ss";
    case Variant::TwoStepInitialized: return "2si";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (auto v : {Variant::OneStep, Variant::OneStepNoise, Variant::OneStepNoiseBounded, Variant::TwoStepScratch,
                 Variant::TwoStepInitialized}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + s + "' (expected 1s, 1sn, 1snb, 2ss or 2si)");
}

inline bool uses_noise(Variant v) { return v == Variant::OneStepNoise || v == Variant::OneStepNoiseBounded; }
inline bool uses_boundary_particles(Variant v) { return v == Variant::OneStepNoiseBounded; }
inline bool is_multi_step(Variant v) { return v == Variant::TwoStepScratch || v == Variant::TwoStepInitialized; }
inline bool needs_pretrained(Variant v) { return v == Variant::TwoStepInitialized; }

struct TrainConfig {
  Variant variant = Variant::OneStep;
  net::GnsConfig model = net::GnsConfig::desk();
  std::size_t batch_size = 2;
  LrSchedule schedule;
  AdamConfig adam;
  std::uint64_t total_steps = 10000;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_interval = 1000;
  std::size_t unroll_steps = 1;  // extra model steps in the multi-step loss
  NoiseConfig noise;

  /// Applies what the variant implies: noise on or off, boundary
  /// distance features on or off.
  TrainConfig resolved() const {
    TrainConfig c = *this;
    c.noise.enabled = uses_noise(variant);
    c.model.boundary_features = !uses_boundary_particles(variant);
    return c;
  }

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
    if (is_multi_step(variant) && unroll_steps < 1) throw ConfigError("multi-step variants need unroll_steps >= 1");
    schedule.validate();
    adam.validate();
    noise.validate();
    model.validate();
  }

  std::size_t extra_frames() const { return is_multi_step(variant) ? unroll_steps : 0; }

  static TrainConfig desk() {
    TrainConfig c;
    c.schedule.lr_start = 1e-3;
    c.schedule.decay_steps = 1e4;
    return c;
  }
  static TrainConfig paper() {
    TrainConfig c;
    c.model = net::GnsConfig::paper();
    return c;
  }
  static TrainConfig profile(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw ConfigError("unknown profile '" + name + "'");
  }
};

inline nlohmann::json to_json_value(const TrainConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"model", c.model},
          {"batch_size", c.batch_size},
          {"schedule", {{"lr_start", c.schedule.lr_start}, {"lr_floor", c.schedule.lr_floor}, {"decay_steps", c.schedule.decay_steps}}},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}},
          {"total_steps", c.total_steps},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"unroll_steps", c.unroll_steps},
          {"noise", c.noise}};
}

/// Overrides fields present in `j`; absent keys keep their current value.
inline void apply_json(TrainConfig& c, const nlohmann::json& j) {
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  if (j.contains("model")) {
    nlohmann::json m = c.model;
    m.update(j.at("model"));
    c.model = m.get<net::GnsConfig>();
  }
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.schedule.lr_start = s.value("lr_start", c.schedule.lr_start);
    c.schedule.lr_floor = s.value("lr_floor", c.schedule.lr_floor);
    c.schedule.decay_steps = s.value("decay_steps", c.schedule.decay_steps);
  }
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
  }
  c.total_steps = j.value("total_steps", c.total_steps);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.unroll_steps = j.value("unroll_steps", c.unroll_steps);
  if (j.contains("noise")) {
    nlohmann::json n = c.noise;
    n.update(j.at("noise"));
    c.noise = n.get<NoiseConfig>();
  }
}

/// Checks that the dataset's boundary representation fits the variant.
inline void check_compatible(const TrainConfig& cfg, const data::Dataset& d) {
  const bool want_particles = uses_boundary_particles(cfg.variant);
  const bool has_particles = d.manifest.boundary == data::BoundaryMode::Particles;
  if (want_particles != has_particles) {
    throw ConfigError("variant " + to_string(cfg.variant) + " needs a dataset with boundary mode '" +
                      (want_particles ? "particles" : "distance") + "', got '" + data::to_string(d.manifest.boundary) +
                      "'");
  }
  if (d.trajectories.empty()) throw DataError("training dataset is empty");
  for (const auto& t : d.trajectories) {
    if (t.num_frames() < net::kHistory + 2 + cfg.extra_frames()) {
      throw DataError("trajectory too short for variant " + to_string(cfg.variant));
    }
  }
}

struct SampleRef {
  std::size_t trajectory = 0;
  std::size_t frame = 0;  // index of the newest input frame
};

/// Uniform draw over all (trajectory, frame) pairs that leave room for the
/// window and its targets.
class FrameSampler {
 public:
  FrameSampler(const data::Dataset& d, std::size_t extra) {
    for (const auto& t : d.trajectories) {
      const std::size_t valid = t.num_frames() - (net::kHistory + 1) - extra;
      offsets_.push_back(total_);
      total_ += valid;
    }
  }
  SampleRef draw(Rng& rng) const {
    const std::uint64_t k = std::uniform_int_distribution<std::uint64_t>(0, total_ - 1)(rng);
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), k) - 1;
    const auto traj = static_cast<std::size_t>(it - offsets_.begin());
    return {traj, net::kHistory + static_cast<std::size_t>(k - *it)};
  }
  std::uint64_t total() const { return total_; }

 private:
  std::vector<std::uint64_t> offsets_;
  std::uint64_t total_ = 0;
};

/// Loss for one sample under the variant's objective.
inline Var sample_loss(const net::GnsParams& params, const data::Normalizer& norm, const data::Trajectory& traj,
                       std::size_t t, const TrainConfig& cfg, Rng& rng) {
  const auto bounds = net::DomainBounds::of(traj.scale());
  const auto model = gns_acceleration_fn(params, norm, traj.types, bounds);
  const std::span<const std::vector<Vec2>> all(traj.frames);
  if (is_multi_step(cfg.variant)) {
    return multi_step_loss(model, traj.types, norm, all.subspan(t - net::kHistory, net::kHistory + 2 + cfg.unroll_steps),
                           cfg.unroll_steps);
  }
  const auto window = all.subspan(t - net::kHistory, net::kHistory + 1);
  if (cfg.noise.active()) {
    const auto noisy = inject_noise(window, traj.types, cfg.noise, rng);
    return one_step_sample_loss(model, traj.types, norm, noisy, traj.frames[t + 1]);
  }
  return one_step_sample_loss(model, traj.types, norm, window, traj.frames[t + 1]);
}

struct TrainHooks {
  std::function<void(std::uint64_t step, double lr, double loss)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  net::GnsParams params;
  AdamState adam;
  std::vector<double> losses;  // batch loss per step, index 0 = first update
  std::vector<Checkpoint> checkpoints;
};

/// Adam on the batch-mean loss. Checkpoints are taken before the first
/// update, every `checkpoint_interval` steps and after the last step.
inline TrainResult train(const TrainConfig& raw_cfg, const data::Dataset& dataset,
                         const std::optional<Checkpoint>& init = std::nullopt, const TrainHooks& hooks = {},
                         bool keep_checkpoints = true) {
  tune_allocator();
  const TrainConfig cfg = raw_cfg.resolved();
  cfg.validate();
  check_compatible(cfg, dataset);
  if (needs_pretrained(cfg.variant) && !init) throw ConfigError("variant 2si requires a pretrained 1s checkpoint");

  TrainResult res;
  res.params = init ? init_from_pretrained(*init, cfg.model) : net::make_gns_params(cfg.model, cfg.seed);
  const auto named = res.params.named();
  res.adam = AdamState::zeros(total_size(named), cfg.adam);
  const data::Normalizer norm = dataset.normalizer();
  const FrameSampler sampler(dataset, cfg.extra_frames());

  auto emit = [&](std::uint64_t step, double loss) {
    Checkpoint c = make_checkpoint(step, res.params, res.adam, dataset.manifest.stats, loss);
    if (hooks.on_checkpoint) hooks.on_checkpoint(c);
    if (keep_checkpoints) res.checkpoints.push_back(std::move(c));
  };
  emit(0, std::nan(""));

  for (std::uint64_t step = 0; step < cfg.total_steps; ++step) {
    Var batch;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      Rng rng = make_rng(cfg.seed, {0x747261696e, step, b});
      const SampleRef s = sampler.draw(rng);
      const std::string where = "step " + std::to_string(step) + ", batch slot " + std::to_string(b) +
                                " (trajectory " + std::to_string(s.trajectory) + ", frame " +
                                std::to_string(s.frame) + ")";
      Var l;
      try {
        l = sample_loss(res.params, norm, dataset.trajectories[s.trajectory], s.frame, cfg, rng);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
      }
      if (!std::isfinite(l.value().item())) throw NumericError("non-finite loss at " + where);
      batch = b == 0 ? l : add(batch, l);
    }
    batch = scale(batch, 1.0 / static_cast<double>(cfg.batch_size));
    backward(batch);
    const double lr = lr_at(cfg.schedule, step);
    adam_step(named, res.adam, lr);
    const double loss = batch.value().item();
    res.losses.push_back(loss);
    if (hooks.on_step) hooks.on_step(step + 1, lr, loss);
    const std::uint64_t done = step + 1;
    if (done % cfg.checkpoint_interval == 0 || done == cfg.total_steps) emit(done, loss);
  }
  return res;
}

/// Plain mean of the one-step loss over every valid frame of every
/// trajectory, without noise. Used for screening and for re-evaluating
/// loaded weights.
inline double evaluation_loss(const net::GnsParams& params, const data::Dataset& d, std::size_t stride = 1) {
  const data::Normalizer norm = d.normalizer();
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& traj : d.trajectories) {
    const auto bounds = net::DomainBounds::of(traj.scale());
    const auto model = gns_acceleration_fn(params, norm, traj.types, bounds);
    const std::span<const std::vector<Vec2>> all(traj.frames);
    for (std::size_t t = net::kHistory; t + 1 < traj.num_frames(); t += stride) {
      total += one_step_sample_loss(model, traj.types, norm, all.subspan(t - net::kHistory, net::kHistory + 1),
                                    traj.frames[t + 1])
                   .value()
                   .item();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

inline std::string checkpoint_file_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08llu.bin", static_cast<unsigned long long>(step));
  return buf;
}

/// Run directory layout: config.json, metrics.csv (step,lr,loss) and
/// checkpoints/ckpt_<step>.bin. Refuses to reuse a directory unless `force`.
inline TrainResult run_training(const TrainConfig& cfg, const data::Dataset& dataset,
                                const std::filesystem::path& run_dir, bool force,
                                const std::optional<Checkpoint>& init = std::nullopt, TrainHooks hooks = {}) {
  namespace fs = std::filesystem;
  if (fs::exists(run_dir) && !fs::is_empty(run_dir)) {
    if (!force) throw ConfigError("run directory " + run_dir.string() + " exists; pass --force to overwrite");
    fs::remove_all(run_dir);
  }
  fs::create_directories(run_dir / "checkpoints");
  nlohmann::json snapshot = to_json_value(cfg.resolved());
  snapshot["dataset"] = data::to_json_value(dataset.manifest);
  data::detail::write_file(run_dir / "config.json", snapshot.dump(2) + "\n");
  std::ofstream metrics(run_dir / "metrics.csv", std::ios::binary);
  metrics << "step,lr,loss\n";
  auto user_step = hooks.on_step;
  hooks.on_step = [&](std::uint64_t step, double lr, double loss) {
    char line[96];
    std::snprintf(line, sizeof(line), "%llu,%.9g,%.17g\n", static_cast<unsigned long long>(step), lr, loss);
    metrics << line;
    metrics.flush();
    if (user_step) user_step(step, lr, loss);
  };
  auto user_ckpt = hooks.on_checkpoint;
  hooks.on_checkpoint = [&](const Checkpoint& c) {
    save_checkpoint(run_dir / "checkpoints" / checkpoint_file_name(c.step), c);
    if (user_ckpt) user_ckpt(c);
  };
  return train(cfg, dataset, init, hooks, false);
}

}  // namespace gns::train
