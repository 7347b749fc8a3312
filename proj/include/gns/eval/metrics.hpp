#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/core/parallel.hpp"
#include "gns/eval/emd.hpp"
#include "gns/eval/rollout.hpp"
#include "gns/net/graph.hpp"

namespace gns::eval {

inline std::vector<Vec2> fluid_points(std::span<const Vec2> p, std::span<const ParticleType> types) {
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (types[i] == ParticleType::Fluid) out.push_back(p[i]);
  return out;
}

/// Mean over fluid particles and both axes of the squared difference.
inline double fluid_squared_error(std::span<const Vec2> a, std::span<const Vec2> b,
                                  std::span<const ParticleType> types) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i] != ParticleType::Fluid) continue;
    const Vec2 d = a[i] - b[i];
    s += d.x * d.x + d.y * d.y;
    n += 2;
  }
  if (n == 0) throw DataError("metric needs at least one fluid particle");
  return s / static_cast<double>(n);
}

/// One-step acceleration error averaged over every valid frame of the
/// trajectory (normalized acceleration units).
inline double mse_acc_1(const Predictor& model, const data::Trajectory& traj) {
  const std::span<const std::vector<Vec2>> all(traj.frames);
  const auto& norm = model.normalizer().acceleration;
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t t = net::kHistory; t + 1 < traj.num_frames(); ++t) {
    const StepContext ctx{traj, t};
    const auto window = all.subspan(t - net::kHistory, net::kHistory + 1);
    s += fluid_squared_error(model.acceleration(window, ctx), detail::true_acceleration(ctx, norm), traj.types);
    ++count;
  }
  if (count == 0) throw DataError("mse_acc_1: trajectory too short");
  return s / static_cast<double>(count);
}

/// Every sample of every trajectory weighted equally.
inline double mse_acc_1(const Predictor& model, std::span<const data::Trajectory> trajs) {
  double s = 0.0;
  std::size_t count = 0;
  for (const auto& t : trajs) {
    const std::size_t k = t.num_frames() - net::kHistory - 1;
    s += mse_acc_1(model, t) * static_cast<double>(k);
    count += k;
  }
  return s / static_cast<double>(count);
}

/// Per predicted frame position error of a rollout against its source.
inline std::vector<double> error_curve(const RolloutResult& r) {
  std::vector<double> c(r.steps());
  for (std::size_t k = 0; k < r.steps(); ++k)
    c[k] = fluid_squared_error(r.frames[k], r.source->frames[r.gt_index(k)], r.source->types);
  return c;
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Segment restarts: a fresh GT window every `segment` frames, each rolled
/// out `segment` steps; the mean covers all segments, steps, particles, axes.
inline double mse_20(const Predictor& model, const data::Trajectory& traj, std::size_t segment = 20) {
  constexpr std::size_t w = net::kHistory + 1;
  if (traj.num_frames() < w + segment) {
    throw DataError("mse_20: trajectory has " + std::to_string(traj.num_frames()) + " frames, needs " +
                    std::to_string(w + segment));
  }
  std::vector<double> errs;
  for (std::size_t s = 0; s + w + segment <= traj.num_frames(); s += segment) {
    const auto c = error_curve(rollout(model, traj, segment, s));
    errs.insert(errs.end(), c.begin(), c.end());
  }
  return mean_of(errs);
}

/// The alternative reading: every `segment`-th frame of one long rollout.
inline double mse_20_subsampled(std::span<const double> full_curve, std::size_t segment = 20) {
  std::vector<double> picked;
  for (std::size_t k = segment - 1; k < full_curve.size(); k += segment) picked.push_back(full_curve[k]);
  return mean_of(picked);
}

struct FullRollout {
  double mse = 0.0;
  std::vector<double> curve;
};

inline FullRollout mse_400(const Predictor& model, const data::Trajectory& traj) {
  FullRollout out;
  out.curve = error_curve(rollout(model, traj, traj.num_frames() - net::kHistory - 1));
  out.mse = mean_of(out.curve);
  return out;
}

struct EmdCurve {
  std::vector<std::size_t> steps;  // rollout step index of each sample
  std::vector<double> values;
  double mean() const { return mean_of(values); }
};

/// EMD between predicted and GT fluid particles on every `stride`-th
/// predicted frame (the stride-th, 2 stride-th, ...).
inline EmdCurve emd_curve(const RolloutResult& r, std::size_t stride = 10) {
  EmdCurve c;
  for (std::size_t k = stride - 1; k < r.steps(); k += stride) {
    c.steps.push_back(k);
    c.values.push_back(emd(fluid_points(r.frames[k], r.source->types),
                           fluid_points(r.source->frames[r.gt_index(k)], r.source->types)));
  }
  return c;
}

struct EvalOptions {
  std::size_t emd_stride = 10;
  std::size_t segment = 20;
  std::size_t jobs = 1;
};

struct TrajectoryMetrics {
  std::string name;
  std::size_t fluid_particles = 0;
  double emd = 0.0;
  double mse_acc_1 = 0.0;
  double mse_20 = 0.0;
  double mse_20_subsampled = 0.0;
  double mse_400 = 0.0;
  std::vector<double> mse_curve;
  EmdCurve emd_curve;
};

inline TrajectoryMetrics evaluate_trajectory(const Predictor& model, const data::Trajectory& traj, std::string name,
                                             const EvalOptions& opt = {}) {
  TrajectoryMetrics m;
  m.name = std::move(name);
  m.fluid_particles = traj.fluid_count();
  const auto full = rollout(model, traj, traj.num_frames() - net::kHistory - 1);
  m.mse_curve = error_curve(full);
  m.mse_400 = mean_of(m.mse_curve);
  m.emd_curve = emd_curve(full, opt.emd_stride);
  m.emd = m.emd_curve.mean();
  m.mse_acc_1 = mse_acc_1(model, traj);
  m.mse_20 = mse_20(model, traj, opt.segment);
  m.mse_20_subsampled = mse_20_subsampled(m.mse_curve, opt.segment);
  return m;
}

struct Range {
  double mean = 0.0, min = 0.0, max = 0.0;
};

inline Range range_of(std::span<const double> v) {
  Range r;
  r.mean = mean_of(v);
  r.min = v.empty() ? r.mean : *std::min_element(v.begin(), v.end());
  r.max = v.empty() ? r.mean : *std::max_element(v.begin(), v.end());
  return r;
}

/// Per-step mean and min/max envelope across trajectories, over the steps
/// all of them reach.
struct CurveEnvelope {
  std::vector<std::size_t> steps;
  std::vector<double> mean, min, max;
};

inline CurveEnvelope envelope(const std::vector<std::vector<double>>& curves, const std::vector<std::size_t>& steps) {
  CurveEnvelope e;
  if (curves.empty()) return e;
  std::size_t len = curves.front().size();
  for (const auto& c : curves) len = std::min(len, c.size());
  for (std::size_t k = 0; k < len; ++k) {
    std::vector<double> col;
    for (const auto& c : curves) col.push_back(c[k]);
    const Range r = range_of(col);
    e.steps.push_back(steps[k]);
    e.mean.push_back(r.mean);
    e.min.push_back(r.min);
    e.max.push_back(r.max);
  }
  return e;
}

struct MetricReport {
  std::string model;
  std::vector<TrajectoryMetrics> rows;
  Range emd, mse_acc_1, mse_20, mse_20_subsampled, mse_400;
  CurveEnvelope mse_curve, emd_curve;
};

inline MetricReport summarize(std::string model, std::vector<TrajectoryMetrics> rows) {
  MetricReport r;
  r.model = std::move(model);
  r.rows = std::move(rows);
  auto column = [&](auto field) {
    std::vector<double> v;
    for (const auto& t : r.rows) v.push_back(t.*field);
    return range_of(v);
  };
  r.emd = column(&TrajectoryMetrics::emd);
  r.mse_acc_1 = column(&TrajectoryMetrics::mse_acc_1);
  r.mse_20 = column(&TrajectoryMetrics::mse_20);
  r.mse_20_subsampled = column(&TrajectoryMetrics::mse_20_subsampled);
  r.mse_400 = column(&TrajectoryMetrics::mse_400);
  std::vector<std::vector<double>> mc, ec;
  std::vector<std::size_t> msteps;
  for (const auto& t : r.rows) {
    mc.push_back(t.mse_curve);
    ec.push_back(t.emd_curve.values);
    if (t.mse_curve.size() > msteps.size()) {
      msteps.resize(t.mse_curve.size());
      for (std::size_t k = 0; k < msteps.size(); ++k) msteps[k] = k;
    }
  }
  r.mse_curve = envelope(mc, msteps);
  if (!r.rows.empty()) {
    std::vector<std::size_t> esteps;
    for (const auto& t : r.rows)
      if (t.emd_curve.steps.size() > esteps.size()) esteps = t.emd_curve.steps;
    r.emd_curve = envelope(ec, esteps);
  }
  return r;
}

/// All four metrics on every trajectory; parallel over trajectories, rows in
/// input order.
inline MetricReport evaluate(const Predictor& model, std::span<const data::Trajectory> trajs,
                             std::span<const std::string> names, std::string label, const EvalOptions& opt = {}) {
  if (names.size() != trajs.size()) throw ContractError("evaluate: one name per trajectory");
  std::vector<TrajectoryMetrics> rows(trajs.size());
  parallel_for(trajs.size(), opt.jobs, [&](std::size_t i) { rows[i] = evaluate_trajectory(model, trajs[i], names[i], opt); });
  return summarize(std::move(label), std::move(rows));
}

inline MetricReport evaluate(const Predictor& model, const data::Dataset& d, std::string label,
                             const EvalOptions& opt = {}) {
  return evaluate(model, d.trajectories, d.manifest.files, std::move(label), opt);
}

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// One row per (model, trajectory), then mean, min and max rows per model.
inline std::string report_csv(std::span<const MetricReport> reports) {
  using detail::fmt;
  std::string out = "model,trajectory,emd,mse_acc_1,mse_20,mse_20_subsampled,mse_400\n";
  for (const auto& r : reports) {
    for (const auto& t : r.rows) {
      out += r.model + "," + t.name + "," + fmt(t.emd) + "," + fmt(t.mse_acc_1) + "," + fmt(t.mse_20) + "," +
             fmt(t.mse_20_subsampled) + "," + fmt(t.mse_400) + "\n";
    }
    auto row = [&](const char* tag, double Range::*f) {
      out += r.model + "," + tag + "," + fmt(r.emd.*f) + "," + fmt(r.mse_acc_1.*f) + "," + fmt(r.mse_20.*f) + "," +
             fmt(r.mse_20_subsampled.*f) + "," + fmt(r.mse_400.*f) + "\n";
    };
    row("mean", &Range::mean);
    row("min", &Range::min);
    row("max", &Range::max);
  }
  return out;
}

/// Per-step curves with their min/max envelope ("range" = min..max).
inline std::string curves_csv(std::span<const MetricReport> reports) {
  using detail::fmt;
  std::string out = "model,metric,step,mean,min,max\n";
  for (const auto& r : reports) {
    auto dump = [&](const char* metric, const CurveEnvelope& e) {
      for (std::size_t k = 0; k < e.steps.size(); ++k) {
        out += r.model + "," + metric + "," + std::to_string(e.steps[k]) + "," + fmt(e.mean[k]) + "," +
               fmt(e.min[k]) + "," + fmt(e.max[k]) + "\n";
      }
    };
    dump("mse", r.mse_curve);
    dump("emd", r.emd_curve);
  }
  return out;
}

inline nlohmann::json to_json_value(const Range& r) { return {{"mean", r.mean}, {"min", r.min}, {"max", r.max}}; }

inline nlohmann::json summary_json(std::span<const MetricReport> reports) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& r : reports) {
    models.push_back({{"model", r.model},
                      {"trajectories", r.rows.size()},
                      {"emd", to_json_value(r.emd)},
                      {"mse_acc_1", to_json_value(r.mse_acc_1)},
                      {"mse_20", to_json_value(r.mse_20)},
                      {"mse_20_subsampled", to_json_value(r.mse_20_subsampled)},
                      {"mse_400", to_json_value(r.mse_400)}});
  }
  return {{"models", models}, {"range", "min/max over trajectories"}};
}

/// Index of the smallest score; ties go to the later step.
inline std::size_t argmin_latest(std::span<const double> scores, std::span<const std::uint64_t> steps) {
  if (scores.empty() || scores.size() != steps.size()) throw ContractError("select_checkpoint: empty series");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] < scores[best] || (scores[i] == scores[best] && steps[i] > steps[best])) best = i;
  }
  return best;
}

struct Candidate {
  std::uint64_t step = 0;
  std::shared_ptr<const Predictor> model;
};

struct Selection {
  std::size_t index = 0;
  std::uint64_t step = 0;
  std::vector<double> scores;  // validation MSE 400 per candidate
};

/// Scores each candidate by its mean full-rollout MSE on `validation`.
inline Selection select_checkpoint(std::span<const Candidate> cands, std::span<const data::Trajectory> validation,
                                   std::size_t jobs = 1) {
  if (cands.empty()) throw ContractError("select_checkpoint: empty series");
  if (validation.empty()) throw DataError("select_checkpoint: empty validation set");
  Selection s;
  std::vector<std::uint64_t> steps;
  for (const auto& c : cands) {
    std::vector<double> per(validation.size());
    parallel_for(validation.size(), jobs, [&](std::size_t i) { per[i] = mse_400(*c.model, validation[i]).mse; });
    s.scores.push_back(mean_of(per));
    steps.push_back(c.step);
  }
  s.index = argmin_latest(s.scores, steps);
  s.step = cands[s.index].step;
  return s;
}

/// Per-frame distribution of neighbor counts of fluid particles within the
/// radius, pooled over trajectories, with the mean curve.
struct NeighborStats {
  double radius = 0.0;
  std::vector<std::vector<std::uint64_t>> histogram;  // [frame][count]
  std::vector<double> mean;

  /// (max - min) / mean of the mean curve over frames [from, end).
  double drift(std::size_t from) const {
    if (from >= mean.size()) throw ContractError("drift: window is empty");
    const std::span<const double> tail(mean.begin() + static_cast<std::ptrdiff_t>(from), mean.end());
    const Range r = range_of(tail);
    return (r.max - r.min) / r.mean;
  }
};

inline NeighborStats neighbor_stats(std::span<const data::Trajectory> trajs, double radius) {
  if (!(radius > 0.0)) throw ConfigError("neighbor_stats: radius must be positive");
  NeighborStats s;
  s.radius = radius;
  std::size_t frames = std::numeric_limits<std::size_t>::max();
  for (const auto& t : trajs) frames = std::min(frames, t.num_frames());
  if (trajs.empty()) frames = 0;
  s.histogram.resize(frames);
  s.mean.assign(frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    std::uint64_t total = 0, particles = 0;
    auto& h = s.histogram[f];
    for (const auto& t : trajs) {
      const auto counts = net::neighbor_counts(t.frames[f], radius);
      for (std::size_t i = 0; i < counts.size(); ++i) {
        if (t.types[i] != ParticleType::Fluid) continue;
        if (counts[i] >= h.size()) h.resize(counts[i] + 1, 0);
        h[counts[i]] += 1;
        total += counts[i];
        ++particles;
      }
    }
    s.mean[f] = particles ? static_cast<double>(total) / static_cast<double>(particles) : 0.0;
  }
  return s;
}

inline std::string neighbor_csv(const NeighborStats& s) {
  std::string out = "frame,mean";
  std::size_t width = 0;
  for (const auto& h : s.histogram) width = std::max(width, h.size());
  for (std::size_t k = 0; k < width; ++k) out += ",n" + std::to_string(k);
  out += "\n";
  for (std::size_t f = 0; f < s.histogram.size(); ++f) {
    out += std::to_string(f) + "," + detail::fmt(s.mean[f]);
    for (std::size_t k = 0; k < width; ++k) out += "," + std::to_string(k < s.histogram[f].size() ? s.histogram[f][k] : 0);
    out += "\n";
  }
  return out;
}

}  // namespace gns::eval
