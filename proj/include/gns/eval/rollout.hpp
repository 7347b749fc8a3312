#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gns/data/manifest.hpp"
#include "gns/data/trajectory.hpp"
#include "gns/net/gns.hpp"
#include "gns/train/checkpoint.hpp"

namespace gns::eval {

/// Where a prediction sits in the source timeline: `frame` is the index of
/// the newest window frame.
struct StepContext {
  const data::Trajectory& source;
  std::size_t frame;
};

/// Anything that advances a six-frame window by one step.
class Predictor {
 public:
  virtual ~Predictor() = default;
  /// Normalized accelerations for every particle.
  virtual std::vector<Vec2> acceleration(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const = 0;
  /// Positions of the next frame.
  virtual std::vector<Vec2> next(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const = 0;
  /// Normalizer the accelerations are expressed in.
  virtual const data::Normalizer& normalizer() const = 0;
};

namespace detail {

inline std::vector<Vec2> euler_positions(std::span<const std::vector<Vec2>> window, std::span<const Vec2> acc,
                                         std::span<const ParticleType> types, const data::AxisNorm& n) {
  const auto& cur = window.back();
  const auto& prev = window[window.size() - 2];
  std::vector<Vec2> out(cur);
  for (std::size_t i = 0; i < cur.size(); ++i) {
    if (types[i] != ParticleType::Fluid) continue;
    const Vec2 v = (cur[i] - prev[i]) + data::denormalize(acc[i], n);
    out[i] = cur[i] + v;
  }
  return out;
}

inline std::vector<Vec2> true_acceleration(const StepContext& ctx, const data::AxisNorm& n) {
  const auto& f = ctx.source.frames;
  if (ctx.frame < 1 || ctx.frame + 1 >= f.size()) throw ContractError("ground truth is not available past the end");
  std::vector<Vec2> a(f[ctx.frame].size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = data::normalize((f[ctx.frame + 1][i] - f[ctx.frame][i]) - (f[ctx.frame][i] - f[ctx.frame - 1][i]), n);
  }
  return a;
}

}  // namespace detail

class GnsPredictor : public Predictor {
 public:
  GnsPredictor(net::GnsParams params, data::Normalizer norm) : params_(std::move(params)), norm_(norm) {}
  explicit GnsPredictor(const train::Checkpoint& c)
      : params_(train::params_from_checkpoint(c)), norm_(data::Normalizer::from(c.stats)) {}

  std::vector<Vec2> acceleration(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const override {
    const auto out = net::gns_acceleration(params_, norm_, ctx.source.types, net::DomainBounds::of(ctx.source.scale()),
                                           net::window_input(window));
    return net::var_points(out.normalized_acceleration);
  }
  std::vector<Vec2> next(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const override {
    const auto acc = acceleration(window, ctx);
    return detail::euler_positions(window, acc, ctx.source.types, norm_.acceleration);
  }
  const data::Normalizer& normalizer() const override { return norm_; }
  const net::GnsParams& params() const { return params_; }

 private:
  net::GnsParams params_;
  data::Normalizer norm_;
};

/// Reproduces the source exactly: next() returns the recorded frame and
/// acceleration() the recorded second difference.
class GroundTruthPredictor : public Predictor {
 public:
  explicit GroundTruthPredictor(data::Normalizer norm) : norm_(norm) {}
  std::vector<Vec2> acceleration(std::span<const std::vector<Vec2>>, const StepContext& ctx) const override {
    return detail::true_acceleration(ctx, norm_.acceleration);
  }
  std::vector<Vec2> next(std::span<const std::vector<Vec2>>, const StepContext& ctx) const override {
    if (ctx.frame + 1 >= ctx.source.num_frames()) throw ContractError("ground truth is not available past the end");
    return ctx.source.frames[ctx.frame + 1];
  }
  const data::Normalizer& normalizer() const override { return norm_; }

 private:
  data::Normalizer norm_;
};

/// Integrates the recorded accelerations from the window it is given.
class TrueAccelerationPredictor : public Predictor {
 public:
  explicit TrueAccelerationPredictor(data::Normalizer norm) : norm_(norm) {}
  std::vector<Vec2> acceleration(std::span<const std::vector<Vec2>>, const StepContext& ctx) const override {
    return detail::true_acceleration(ctx, norm_.acceleration);
  }
  std::vector<Vec2> next(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const override {
    return detail::euler_positions(window, acceleration(window, ctx), ctx.source.types, norm_.acceleration);
  }
  const data::Normalizer& normalizer() const override { return norm_; }

 private:
  data::Normalizer norm_;
};

/// Constant-velocity extrapolation (zero physical acceleration).
class ZeroAccelerationPredictor : public Predictor {
 public:
  explicit ZeroAccelerationPredictor(data::Normalizer norm) : norm_(norm) {}
  std::vector<Vec2> acceleration(std::span<const std::vector<Vec2>> window, const StepContext&) const override {
    return std::vector<Vec2>(window.back().size(), data::normalize(Vec2{0.0, 0.0}, norm_.acceleration));
  }
  std::vector<Vec2> next(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const override {
    const auto& cur = window.back();
    const auto& prev = window[window.size() - 2];
    std::vector<Vec2> out(cur);
    for (std::size_t i = 0; i < cur.size(); ++i)
      if (ctx.source.types[i] == ParticleType::Fluid) out[i] = cur[i] + (cur[i] - prev[i]);
    return out;
  }
  const data::Normalizer& normalizer() const override { return norm_; }

 private:
  data::Normalizer norm_;
};

/// Adds a fixed offset to another predictor: `position_offset` to every
/// fluid position it predicts and `acceleration_offset` to its accelerations.
class OffsetPredictor : public Predictor {
 public:
  OffsetPredictor(std::shared_ptr<const Predictor> base, Vec2 position_offset, Vec2 acceleration_offset)
      : base_(std::move(base)), dp_(position_offset), da_(acceleration_offset) {}
  std::vector<Vec2> acceleration(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const override {
    auto a = base_->acceleration(window, ctx);
    for (auto& v : a) v += da_;
    return a;
  }
  std::vector<Vec2> next(std::span<const std::vector<Vec2>> window, const StepContext& ctx) const override {
    auto p = base_->next(window, ctx);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (ctx.source.types[i] == ParticleType::Fluid) p[i] += dp_;
    return p;
  }
  const data::Normalizer& normalizer() const override { return base_->normalizer(); }

 private:
  std::shared_ptr<const Predictor> base_;
  Vec2 dp_, da_;
};

/// Non-finite prediction during a rollout.
class RolloutDiverged : public NumericError {
 public:
  RolloutDiverged(std::size_t step, std::size_t particle)
      : NumericError("rollout diverged at step " + std::to_string(step) + " (particle " + std::to_string(particle) +
                     ")"),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct RolloutResult {
  const data::Trajectory* source = nullptr;
  std::size_t start = 0;                  // first GT frame of the initial window
  std::vector<std::vector<Vec2>> frames;  // predicted frames start+6, start+7, ...

  std::size_t steps() const { return frames.size(); }
  /// GT index of predicted frame k.
  std::size_t gt_index(std::size_t k) const { return start + net::kHistory + 1 + k; }
};

/// Autoregressive rollout from the six GT frames beginning at `start`.
/// Obstacle particles are pinned to their recorded positions.
inline RolloutResult rollout(const Predictor& model, const data::Trajectory& source, std::size_t steps,
                             std::size_t start = 0) {
  constexpr std::size_t w = net::kHistory + 1;
  if (source.num_frames() < start + w || steps > source.num_frames() - start - w) {
    throw ContractError("rollout: " + std::to_string(steps) + " steps from frame " + std::to_string(start) +
                        " exceed a trajectory of " + std::to_string(source.num_frames()) + " frames");
  }
  RolloutResult r;
  r.source = &source;
  r.start = start;
  std::vector<std::vector<Vec2>> window(source.frames.begin() + static_cast<std::ptrdiff_t>(start),
                                        source.frames.begin() + static_cast<std::ptrdiff_t>(start + w));
  for (std::size_t k = 0; k < steps; ++k) {
    auto p = model.next(window, StepContext{source, start + w - 1 + k});
    if (p.size() != source.num_particles()) throw ShapeError("rollout: predictor changed the particle count");
    const auto& gt = source.frames[start + w + k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(p[i].x) || !std::isfinite(p[i].y)) throw RolloutDiverged(k, i);
      if (source.types[i] != ParticleType::Fluid) p[i] = gt[i];
    }
    window.erase(window.begin());
    window.push_back(p);
    r.frames.push_back(std::move(p));
  }
  return r;
}

}  // namespace gns::eval
