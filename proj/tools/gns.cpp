// Command-line front end: data generation, training, evaluation and analysis.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "gns/data/generate.hpp"
#include "gns/eval/generalize.hpp"
#include "gns/eval/metrics.hpp"
#include "gns/eval/render.hpp"
#include "gns/train/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t jobs = 1;
  std::string profile = "desk";
  bool force = false;
  std::string out;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(gns::data::detail::read_file(path), nullptr, true, true);
  } catch (const json::exception& e) {
    throw gns::ConfigError("config " + path + ": " + e.what());
  }
}

json section(const json& cfg, const char* key) { return cfg.contains(key) ? cfg.at(key) : json::object(); }

template <class T>
T merged(T base, const json& overrides) {
  json j = base;
  j.update(overrides);
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw gns::ConfigError(std::string("bad config value: ") + e.what());
  }
}

void require_out(const Common& c) {
  if (c.out.empty()) throw gns::ConfigError("--out is required");
}

void write_text(const fs::path& p, const std::string& s) { gns::data::detail::write_file(p, s); }

void prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw gns::ConfigError("output directory " + dir.string() + " exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

gns::train::TrainConfig profile_train_config(const std::string& profile) {
  return gns::train::TrainConfig::profile(profile);
}

gns::data::GenerateConfig generate_config(const Common& c, const json& cfg) {
  auto g = c.profile == "paper" ? gns::data::GenerateConfig::paper() : gns::data::GenerateConfig::desk();
  if (c.profile != "paper" && c.profile != "desk") throw gns::ConfigError("unknown profile '" + c.profile + "'");
  const json gen = section(cfg, "generate");
  g.count = gen.value("count", g.count);
  g.frames = gen.value("frames", g.frames);
  g.seed = gen.value("seed", g.seed);
  if (gen.contains("boundary")) g.boundary = gns::data::boundary_mode_from_string(gen.at("boundary"));
  g.boundary_spacing = gen.value("boundary_spacing", g.boundary_spacing);
  g.scene = merged(g.scene, section(cfg, "scene"));
  g.sim = merged(g.sim, section(cfg, "sim"));
  if (c.seed_set) g.seed = c.seed;
  g.jobs = c.jobs;
  return g;
}

/// "label=path" or a bare path labelled by its stem.
std::pair<std::string, fs::path> labelled(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) return {fs::path(arg).stem().string(), fs::path(arg)};
  return {arg.substr(0, eq), fs::path(arg.substr(eq + 1))};
}

struct LoadedModel {
  std::string label;
  std::shared_ptr<const gns::eval::Predictor> predictor;
  bool boundary_particles = false;
};

LoadedModel load_model(const std::string& arg) {
  auto [label, path] = labelled(arg);
  const auto ckpt = gns::train::load_checkpoint(path);
  return {label, std::make_shared<gns::eval::GnsPredictor>(ckpt), !ckpt.model.boundary_features};
}

const gns::data::Dataset& for_model(const LoadedModel& m, const gns::data::Dataset& plain,
                                    std::unique_ptr<gns::data::Dataset>& walled) {
  const bool has = plain.manifest.boundary == gns::data::BoundaryMode::Particles;
  if (m.boundary_particles == has) return plain;
  if (has) throw gns::DataError("model " + m.label + " uses distance features but the data carries wall particles");
  if (!walled) walled = std::make_unique<gns::data::Dataset>(gns::data::with_boundary_particles(plain));
  return *walled;
}

void render_rollouts(const fs::path& dir, const std::string& label, const gns::eval::Predictor& model,
                     const gns::data::Dataset& d, std::size_t every, std::size_t count) {
  for (std::size_t t = 0; t < std::min(count, d.trajectories.size()); ++t) {
    const auto& traj = d.trajectories[t];
    const auto r = gns::eval::rollout(model, traj, traj.num_frames() - gns::net::kHistory - 1);
    const fs::path base = dir / fs::path(d.manifest.files[t]).stem();
    for (std::size_t k = 0; k < r.steps(); k += every) {
      const std::size_t f = r.gt_index(k);
      gns::eval::write_png(base / gns::eval::frame_file_name(label, f),
                           gns::eval::render_frame(r.frames[k], traj.types, traj.scale()));
      gns::eval::write_png(base / gns::eval::frame_file_name("ground_truth", f),
                           gns::eval::render_frame(traj.frames[f], traj.types, traj.scale()));
    }
  }
}

int cmd_gen_data(const Common& c, std::optional<std::size_t> count, std::optional<std::size_t> frames,
                 const std::string& boundary) {
  require_out(c);
  auto g = generate_config(c, load_config(c.config));
  if (count) g.count = *count;
  if (frames) g.frames = *frames;
  if (!boundary.empty()) g.boundary = gns::data::boundary_mode_from_string(boundary);
  const auto d = gns::data::generate_dataset(c.out, g, c.force);
  std::size_t largest = 0;
  for (const auto& t : d.trajectories) largest = std::max(largest, t.num_particles());
  std::cerr << "wrote " << d.trajectories.size() << " trajectories of " << g.frames << " frames to " << c.out
            << " (largest " << largest << " particles)\n";
  return kOk;
}

struct TrainArgs {
  std::string data, variant, init, validation;
  std::uint64_t steps = 0;
  std::uint64_t interval = 0;
  std::size_t progress = 100;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  require_out(c);
  if (a.data.empty()) throw gns::ConfigError("--data is required");
  const json cfgfile = load_config(c.config);
  auto tc = profile_train_config(c.profile);
  gns::train::apply_json(tc, section(cfgfile, "train"));
  if (!a.variant.empty()) tc.variant = gns::train::variant_from_string(a.variant);
  if (c.seed_set) tc.seed = c.seed;
  if (a.steps) tc.total_steps = a.steps;
  if (a.interval) tc.checkpoint_interval = a.interval;
  const auto dataset = gns::data::load_dataset(a.data);
  std::optional<gns::train::Checkpoint> init;
  if (!a.init.empty()) init = gns::train::load_checkpoint(a.init);

  std::optional<gns::data::Dataset> validation;
  if (!a.validation.empty()) {
    validation = gns::data::load_dataset(a.validation);
    gns::train::check_compatible(tc.resolved(), *validation);
  }
  std::string screening = "step,emd,mse_acc_1,mse_20,mse_20_subsampled,mse_400,status\n";
  std::vector<double> scores;
  std::vector<std::uint64_t> steps;
  gns::train::TrainHooks hooks;
  hooks.on_step = [&](std::uint64_t step, double lr, double loss) {
    if (a.progress && step % a.progress == 0) std::fprintf(stderr, "step %llu lr %.3g loss %.6g\n", (unsigned long long)step, lr, loss);
  };
  if (validation) {
    hooks.on_checkpoint = [&](const gns::train::Checkpoint& ck) {
      gns::eval::EvalOptions opt;
      opt.jobs = c.jobs;
      const gns::eval::GnsPredictor model(ck);
      std::string row = std::to_string(ck.step);
      try {
        const auto r = gns::eval::evaluate(model, *validation, "screen", opt);
        for (double v : {r.emd.mean, r.mse_acc_1.mean, r.mse_20.mean, r.mse_20_subsampled.mean, r.mse_400.mean})
          row += "," + gns::eval::detail::fmt(v);
        row += ",ok";
        scores.push_back(r.mse_400.mean);
      } catch (const gns::NumericError& e) {
        row += ",,,,,,diverged";
        scores.push_back(std::numeric_limits<double>::infinity());
      }
      steps.push_back(ck.step);
      screening += row + "\n";
      std::cerr << "screened checkpoint " << ck.step << "\n";
    };
  }
  gns::train::run_training(tc, dataset, c.out, c.force, init, hooks);
  if (validation) {
    write_text(fs::path(c.out) / "screening.csv", screening);
    const std::size_t best = gns::eval::argmin_latest(scores, steps);
    write_text(fs::path(c.out) / "selection.json",
               json{{"metric", "mse_400"}, {"step", steps[best]}, {"score", scores[best]},
                    {"checkpoint", "checkpoints/" + gns::train::checkpoint_file_name(steps[best])}}
                       .dump(2) + "\n");
  }
  return kOk;
}

struct EvalArgs {
  std::string data;
  std::vector<std::string> checkpoints;
  bool baselines = false;
  std::size_t render_every = 0;
  std::size_t render_count = 1;
  std::size_t emd_stride = 10;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  require_out(c);
  if (a.data.empty()) throw gns::ConfigError("--data is required");
  if (a.checkpoints.empty() && !a.baselines) throw gns::ConfigError("nothing to evaluate: pass --checkpoint or --baselines");
  const auto data = gns::data::load_dataset(a.data);
  std::unique_ptr<gns::data::Dataset> walled;
  std::vector<LoadedModel> models;
  for (const auto& ck : a.checkpoints) models.push_back(load_model(ck));
  if (a.baselines) {
    models.push_back({"ground_truth", std::make_shared<gns::eval::GroundTruthPredictor>(data.normalizer()), false});
    models.push_back({"zero_acceleration", std::make_shared<gns::eval::ZeroAccelerationPredictor>(data.normalizer()), false});
  }
  prepare_out(c.out, c.force);
  gns::eval::EvalOptions opt;
  opt.jobs = c.jobs;
  opt.emd_stride = a.emd_stride;
  std::vector<gns::eval::MetricReport> reports;
  for (const auto& m : models) {
    const auto& d = for_model(m, data, walled);
    reports.push_back(gns::eval::evaluate(*m.predictor, d, m.label, opt));
    if (a.render_every) render_rollouts(fs::path(c.out) / "renders", m.label, *m.predictor, d, a.render_every, a.render_count);
    std::cerr << m.label << ": mse_400 " << reports.back().mse_400.mean << "\n";
  }
  write_text(fs::path(c.out) / "report.csv", gns::eval::report_csv(reports));
  write_text(fs::path(c.out) / "curves.csv", gns::eval::curves_csv(reports));
  write_text(fs::path(c.out) / "summary.json", gns::eval::summary_json(reports).dump(2) + "\n");
  return kOk;
}

struct GeneralizeArgs {
  std::vector<std::string> checkpoints;
  std::size_t count = 2;
  std::size_t frames = 100;
  std::size_t render_every = 10;
  std::size_t emd_stride = 10;
};

int cmd_generalize(const Common& c, const GeneralizeArgs& a) {
  require_out(c);
  if (a.checkpoints.empty()) throw gns::ConfigError("--checkpoint is required");
  const json cfg = load_config(c.config);
  auto g = generate_config(c, cfg);
  g.scene = gns::eval::tall_scene_spec(g.scene);
  g.count = a.count;
  g.frames = a.frames;
  g.boundary = gns::data::BoundaryMode::Distance;
  prepare_out(c.out, c.force);
  const auto scenes = gns::data::generate_trajectories(g);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < scenes.size(); ++i) names.push_back("tall_" + std::to_string(i));
  std::vector<gns::eval::GeneralizationModel> models;
  for (const auto& ck : a.checkpoints) {
    const auto m = load_model(ck);
    models.push_back({m.label, m.predictor, m.boundary_particles});
  }
  gns::eval::GeneralizationOptions opt;
  opt.render_dir = a.render_every ? fs::path(c.out) / "renders" : fs::path();
  opt.render_every = std::max<std::size_t>(a.render_every, 1);
  opt.emd_stride = a.emd_stride;
  opt.jobs = c.jobs;
  const auto runs = gns::eval::generalization_experiment(models, scenes, names, opt);
  write_text(fs::path(c.out) / "generalization.csv", gns::eval::generalization_csv(runs));
  json summary = json::array();
  for (const auto& r : runs) summary.push_back({{"model", r.model}, {"scene", r.scene}, {"mean_emd", r.emd.mean()}});
  write_text(fs::path(c.out) / "summary.json", summary.dump(2) + "\n");
  return kOk;
}

struct NeighborArgs {
  std::string data;
  double radius = 0.03;
  std::size_t count = 50;
  std::size_t frames = 400;
  std::size_t plateau_from = 100;
};

int cmd_neighbors(const Common& c, const NeighborArgs& a) {
  require_out(c);
  std::vector<gns::data::Trajectory> trajs;
  if (!a.data.empty()) {
    trajs = gns::data::load_dataset(a.data).trajectories;
  } else {
    auto g = generate_config(c, load_config(c.config));
    g.count = a.count;
    g.frames = a.frames;
    g.boundary = gns::data::BoundaryMode::Distance;
    trajs = gns::data::generate_trajectories(g);
  }
  prepare_out(c.out, c.force);
  const auto s = gns::eval::neighbor_stats(trajs, a.radius);
  write_text(fs::path(c.out) / "neighbors.csv", gns::eval::neighbor_csv(s));
  const std::size_t from = std::min(a.plateau_from, s.mean.empty() ? 0 : s.mean.size() - 1);
  write_text(fs::path(c.out) / "summary.json",
             json{{"radius", a.radius}, {"trajectories", trajs.size()}, {"frames", s.mean.size()},
                  {"initial_mean", s.mean.empty() ? 0.0 : s.mean.front()}, {"plateau_from", from},
                  {"plateau_drift", s.drift(from)}}
                     .dump(2) + "\n");
  std::cerr << "plateau drift " << s.drift(from) << "\n";
  return kOk;
}

struct SelectArgs {
  std::string run, validation;
};

int cmd_select(const Common& c, const SelectArgs& a) {
  if (a.run.empty() || a.validation.empty()) throw gns::ConfigError("--run and --validation are required");
  const auto validation = gns::data::load_dataset(a.validation);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fs::path(a.run) / "checkpoints")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<gns::eval::Candidate> cands;
  for (const auto& f : files) {
    const auto ck = gns::train::load_checkpoint(f);
    cands.push_back({ck.step, std::make_shared<gns::eval::GnsPredictor>(ck)});
  }
  const auto s = gns::eval::select_checkpoint(cands, validation.trajectories, c.jobs);
  json scores = json::array();
  for (std::size_t i = 0; i < cands.size(); ++i) scores.push_back({{"step", cands[i].step}, {"mse_400", s.scores[i]}});
  const std::string text = json{{"metric", "mse_400"}, {"step", s.step}, {"checkpoint", files[s.index].string()},
                                {"scores", scores}}
                               .dump(2) + "\n";
  if (c.out.empty()) {
    std::cout << text;
  } else {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "selection.json", text);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  gns::tune_allocator();
  CLI::App app{"Graph network fluid simulator: data generation, training and evaluation"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--seed", common.seed, "Base seed")->each([&](const std::string&) { common.seed_set = true; });
    sub->add_option("--jobs", common.jobs, "Worker threads (0 = all cores)");
    sub->add_option("--profile", common.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    sub->add_flag("--force", common.force, "Overwrite an existing output directory");
    sub->add_option("--out", common.out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "Simulate a seeded data set");
  add_common(gen);
  std::optional<std::size_t> gen_count, gen_frames;
  std::string gen_boundary;
  gen->add_option("--count", gen_count, "Number of trajectories");
  gen->add_option("--frames", gen_frames, "Frames per trajectory");
  gen->add_option("--boundary", gen_boundary, "distance or particles")->check(CLI::IsMember({"distance", "particles"}));

  auto* tr = app.add_subcommand("train", "Train one model variant");
  add_common(tr);
  TrainArgs targs;
  tr->add_option("--data", targs.data, "Training data set directory");
  tr->add_option("--variant", targs.variant, "1s, 1sn, 1snb, 2ss or 2si")
      ->check(CLI::IsMember({"1s", "1sn", "1snb", "2ss", "2si"}));
  tr->add_option("--init", targs.init, "Pretrained checkpoint (required for 2si)");
  tr->add_option("--validation", targs.validation, "Validation data set for checkpoint screening");
  tr->add_option("--steps", targs.steps, "Number of Adam steps");
  tr->add_option("--checkpoint-interval", targs.interval, "Steps between checkpoints");
  tr->add_option("--progress", targs.progress, "Log every N steps (0 = quiet)");

  auto* ev = app.add_subcommand("eval", "Score checkpoints on a test set");
  add_common(ev);
  EvalArgs eargs;
  ev->add_option("--data", eargs.data, "Test data set directory");
  ev->add_option("--checkpoint", eargs.checkpoints, "[label=]path, repeatable");
  ev->add_flag("--baselines", eargs.baselines, "Also score the ground-truth and zero-acceleration baselines");
  ev->add_option("--render-every", eargs.render_every, "Write PNG frames every N rollout steps (0 = off)");
  ev->add_option("--render-count", eargs.render_count, "Trajectories to render");
  ev->add_option("--emd-stride", eargs.emd_stride, "EMD on every N-th rollout frame");

  auto* gz = app.add_subcommand("generalize", "Roll out on a domain of twice the height");
  add_common(gz);
  GeneralizeArgs gargs;
  gz->add_option("--checkpoint", gargs.checkpoints, "[label=]path, repeatable");
  gz->add_option("--count", gargs.count, "Tall scenes to simulate");
  gz->add_option("--frames", gargs.frames, "Frames per scene");
  gz->add_option("--render-every", gargs.render_every, "PNG frames every N steps (0 = off)");
  gz->add_option("--emd-stride", gargs.emd_stride, "EMD on every N-th rollout frame");

  auto* nb = app.add_subcommand("neighbors", "Neighbor-count distribution over time");
  add_common(nb);
  NeighborArgs nargs;
  nb->add_option("--data", nargs.data, "Data set directory (default: simulate fresh scenes)");
  nb->add_option("--radius", nargs.radius, "Connectivity radius in scaled units");
  nb->add_option("--count", nargs.count, "Scenes to simulate");
  nb->add_option("--frames", nargs.frames, "Frames per scene");
  nb->add_option("--plateau-from", nargs.plateau_from, "First frame of the plateau window");

  auto* sel = app.add_subcommand("select", "Pick the checkpoint with the lowest validation MSE 400");
  add_common(sel);
  SelectArgs sargs;
  sel->add_option("--run", sargs.run, "Training run directory");
  sel->add_option("--validation", sargs.validation, "Validation data set directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen_data(common, gen_count, gen_frames, gen_boundary);
    if (*tr) return cmd_train(common, targs);
    if (*ev) return cmd_eval(common, eargs);
    if (*gz) return cmd_generalize(common, gargs);
    if (*nb) return cmd_neighbors(common, nargs);
    if (*sel) return cmd_select(common, sargs);
  } catch (const gns::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const gns::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const gns::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
