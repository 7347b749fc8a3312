#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "gns/core/parallel.hpp"
#include "gns/data/trajectory.hpp"
#include "gns/eval/metrics.hpp"
#include "gns/eval/render.hpp"

namespace gns::eval {

/// Scene distribution of the training set stretched to twice the height.
inline flip::SceneSpec tall_scene_spec(flip::SceneSpec base = {}) {
  base.domain_y = 2 * base.domain_x;
  return base;
}

struct GeneralizationModel {
  std::string label;
  std::shared_ptr<const Predictor> model;
  bool boundary_particles = false;  // model expects wall particles in the input
};

struct GeneralizationOptions {
  std::size_t emd_stride = 10;
  std::size_t steps = 0;  // 0 = full trajectory
  std::filesystem::path render_dir;  // empty = no images
  std::size_t render_every = 10;
  std::size_t jobs = 1;
};

struct GeneralizationRun {
  std::string model;
  std::string scene;
  std::shared_ptr<const data::Trajectory> source;  // keeps rollout.source alive
  RolloutResult rollout;
  EmdCurve emd;
  std::vector<double> mse_curve;
};

inline double original_domain_top(const data::Trajectory& t) {
  return data::ScaleMap(t.domain_x, t.domain_x).upper().y;
}

/// Rolls every model out on every (tall) scene and scores it against the
/// simulator. Wall particles along the extended walls are added for models
/// that use them; distance features see the extended walls through the
/// trajectory's own bounds.
inline std::vector<GeneralizationRun> generalization_experiment(std::span<const GeneralizationModel> models,
                                                                std::span<const data::Trajectory> scenes,
                                                                std::span<const std::string> names,
                                                                const GeneralizationOptions& opt = {}) {
  if (names.size() != scenes.size()) throw ContractError("generalization_experiment: one name per scene");
  std::vector<std::shared_ptr<const data::Trajectory>> walled;
  for (const auto& s : scenes) walled.push_back(std::make_shared<const data::Trajectory>(data::add_boundary_particles(s)));
  std::vector<GeneralizationRun> runs(models.size() * scenes.size());
  parallel_for(runs.size(), opt.jobs, [&](std::size_t idx) {
    const auto& m = models[idx / scenes.size()];
    const std::size_t si = idx % scenes.size();
    GeneralizationRun r;
    r.source = m.boundary_particles ? walled[si] : std::shared_ptr<const data::Trajectory>(std::shared_ptr<void>{}, &scenes[si]);
    const data::Trajectory& src = *r.source;
    const std::size_t max_steps = src.num_frames() - net::kHistory - 1;
    r.model = m.label;
    r.scene = names[si];
    r.rollout = rollout(*m.model, src, opt.steps == 0 ? max_steps : std::min(opt.steps, max_steps));
    r.emd = emd_curve(r.rollout, opt.emd_stride);
    r.mse_curve = error_curve(r.rollout);
    runs[idx] = std::move(r);
  });
  if (!opt.render_dir.empty()) {
    for (auto& r : runs) {
      const auto& src = *r.rollout.source;
      RenderOptions ro;
      ro.guide_y = original_domain_top(src);
      const auto base = opt.render_dir / r.scene;
      for (std::size_t k = 0; k < r.rollout.steps(); k += opt.render_every) {
        const std::size_t frame = r.rollout.gt_index(k);
        write_png(base / frame_file_name(r.model, frame), render_frame(r.rollout.frames[k], src.types, src.scale(), ro));
        write_png(base / frame_file_name("ground_truth", frame), render_frame(src.frames[frame], src.types, src.scale(), ro));
      }
    }
  }
  return runs;
}

/// One row per (model, scene, sampled step).
inline std::string generalization_csv(std::span<const GeneralizationRun> runs) {
  std::string out = "model,scene,step,frame,emd,mse\n";
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.emd.steps.size(); ++i) {
      const std::size_t k = r.emd.steps[i];
      out += r.model + "," + r.scene + "," + std::to_string(k) + "," + std::to_string(r.rollout.gt_index(k)) + "," +
             detail::fmt(r.emd.values[i]) + "," + detail::fmt(r.mse_curve[k]) + "\n";
    }
  }
  return out;
}

}  // namespace gns::eval
