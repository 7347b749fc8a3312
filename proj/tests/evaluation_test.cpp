#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "gns/eval/generalize.hpp"
#include "gns/eval/metrics.hpp"

namespace gns::eval {
namespace {

std::vector<Vec2> random_points(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::vector<Vec2> p(n);
  for (auto& q : p) q = {uniform(rng, lo, hi), uniform(rng, lo, hi)};
  return p;
}

double brute_force_emd(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[perm[i]]).norm();
    best = std::min(best, s / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

TEST(Emd, MatchesBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 8;
    const auto a = random_points(rng, n), b = random_points(rng, n);
    EXPECT_NEAR(emd(a, b), brute_force_emd(a, b), 1e-9) << "n=" << n;
  }
}

TEST(Emd, AssignmentOnArbitraryCosts) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 7;
    std::vector<double> c(n * n);
    for (auto& v : c) v = uniform(rng, -5, 5);
    const auto asg = solve_assignment(c, n);
    double got = 0.0;
    for (std::size_t i = 0; i < n; ++i) got += c[i * n + asg[i]];
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += c[i * n + perm[i]];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(got, best, 1e-9);
  }
}

TEST(Emd, TranslationIdentity) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_points(rng, 5 + trial % 40);
    const Vec2 t{uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3)};
    auto y = x;
    for (auto& p : y) p += t;
    EXPECT_NEAR(emd(x, y), t.norm(), 1e-9);
  }
}

TEST(Emd, MetricPropertiesAndPermutation) {
  Rng rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + trial;
    const auto x = random_points(rng, n), y = random_points(rng, n), z = random_points(rng, n);
    EXPECT_EQ(emd(x, x), 0.0);
    EXPECT_NEAR(emd(x, y), emd(y, x), 1e-12);
    EXPECT_LE(emd(x, z), emd(x, y) + emd(y, z) + 1e-9);
    auto xp = x, yp = y;
    std::shuffle(xp.begin(), xp.end(), rng);
    std::shuffle(yp.begin(), yp.end(), rng);
    EXPECT_EQ(emd(xp, yp), emd(x, y));
    EXPECT_EQ(emd(x, xp), 0.0);
  }
  EXPECT_THROW(emd(random_points(rng, 3), random_points(rng, 4)), ShapeError);
  EXPECT_EQ(emd(std::vector<Vec2>{}, std::vector<Vec2>{}), 0.0);
}

TEST(Emd, PlanMarginals) {
  Rng rng(15);
  const std::size_t n = 12;
  const auto plan = transport_plan(random_points(rng, n), random_points(rng, n));
  const auto p = plan.dense();
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_GE(p[i * n + j], 0.0);
      row += p[i * n + j];
      col += p[j * n + i];
    }
    EXPECT_NEAR(row, 1.0 / n, 1e-9);
    EXPECT_NEAR(col, 1.0 / n, 1e-9);
  }
}

const data::Dataset& small_dataset() {
  static const data::Dataset d = [] {
    flip::SceneSpec s;
    s.steps = 40;
    std::vector<data::Trajectory> trajs;
    for (std::uint64_t seed : {21u, 22u}) trajs.push_back(data::make_trajectory(flip::simulate_trajectory(seed, s, {})));
    return data::make_dataset(std::move(trajs));
  }();
  return d;
}

net::GnsConfig tiny_model() {
  net::GnsConfig c;
  c.latent = 8;
  c.mlp_hidden = 8;
  c.message_passing_steps = 2;
  c.type_embedding = 4;
  return c;
}

TEST(Rollout, GroundTruthOracleScoresZero) {
  const auto& d = small_dataset();
  const GroundTruthPredictor gt(d.normalizer());
  const auto report = evaluate(gt, d, "gt");
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.emd, 0.0);
    EXPECT_EQ(r.mse_acc_1, 0.0);
    EXPECT_EQ(r.mse_20, 0.0);
    EXPECT_EQ(r.mse_400, 0.0);
  }
}

TEST(Rollout, TrueAccelerationsReproduceTrajectory) {
  const auto& traj = small_dataset().trajectories[0];
  const TrueAccelerationPredictor model(small_dataset().normalizer());
  const auto r = rollout(model, traj, traj.num_frames() - 6);
  ASSERT_EQ(r.steps(), traj.num_frames() - 6);
  double worst = 0.0;
  for (std::size_t k = 0; k < r.steps(); ++k)
    for (std::size_t i = 0; i < traj.num_particles(); ++i)
      worst = std::max(worst, (r.frames[k][i] - traj.frames[r.gt_index(k)][i]).norm());
  EXPECT_LT(worst, 1e-10);
  EXPECT_EQ(rollout(model, traj, 0).steps(), 0u);
  EXPECT_THROW(rollout(model, traj, traj.num_frames() - 5), ContractError);
}

TEST(Rollout, ConstantVelocityOnStaticPoolIsExact) {
  data::Trajectory t;
  t.types = {ParticleType::Fluid, ParticleType::Fluid, ParticleType::Obstacle};
  t.frames.assign(30, {{0.3, 0.2}, {0.4, 0.2}, {0.5, 0.5}});
  data::Normalizer n{{{0, 0}, {1, 1}}, {{0, 0}, {1, 1}}};
  const ZeroAccelerationPredictor still(n);
  EXPECT_EQ(mse_20(still, t), 0.0);
  EXPECT_EQ(mse_400(still, t).mse, 0.0);
  EXPECT_EQ(mse_acc_1(still, t), 0.0);
}

TEST(Rollout, OffsetPredictorHandValues) {
  const auto& d = small_dataset();
  const auto& traj = d.trajectories[1];
  auto gt = std::make_shared<GroundTruthPredictor>(d.normalizer());
  const Vec2 dp{3e-3, -4e-3}, da{0.5, -1.5};
  const OffsetPredictor biased(gt, dp, da);
  const double d2 = (dp.x * dp.x + dp.y * dp.y) / 2.0;
  EXPECT_NEAR(mse_20(biased, traj), d2, 1e-15);
  const auto full = mse_400(biased, traj);
  EXPECT_NEAR(full.mse, d2, 1e-15);
  EXPECT_NEAR(mse_acc_1(biased, traj), (da.x * da.x + da.y * da.y) / 2.0, 1e-12);
  const auto e = emd_curve(rollout(biased, traj, 30), 10);
  EXPECT_EQ(e.steps, (std::vector<std::size_t>{9, 19, 29}));
  for (double v : e.values) EXPECT_NEAR(v, dp.norm(), 1e-9);
}

TEST(Rollout, DivergenceCarriesStep) {
  struct Exploding : Predictor {
    data::Normalizer n{{{0, 0}, {1, 1}}, {{0, 0}, {1, 1}}};
    std::vector<Vec2> acceleration(std::span<const std::vector<Vec2>> w, const StepContext&) const override {
      return std::vector<Vec2>(w.back().size());
    }
    std::vector<Vec2> next(std::span<const std::vector<Vec2>> w, const StepContext& ctx) const override {
      auto p = w.back();
      if (ctx.frame == 8) p[0].x = std::nan("");
      return p;
    }
    const data::Normalizer& normalizer() const override { return n; }
  } model;
  try {
    rollout(model, small_dataset().trajectories[0], 10);
    FAIL();
  } catch (const RolloutDiverged& e) {
    EXPECT_EQ(e.step(), 3u);
  }
}

TEST(Metrics, GnsMatchesStraightLineRecomputation) {
  const auto& d = small_dataset();
  const auto& traj = d.trajectories[0];
  const auto norm = d.normalizer();
  const auto params = net::make_gns_params(tiny_model(), 4);
  const GnsPredictor model(params, norm);
  const auto bounds = net::DomainBounds::of(traj.scale());
  const std::span<const std::vector<Vec2>> all(traj.frames);

  double acc = 0.0;
  std::size_t samples = 0;
  for (std::size_t t = 5; t + 1 < traj.num_frames(); ++t) {
    const auto a = net::var_points(
        net::gns_acceleration(params, norm, traj.types, bounds, net::window_input(all.subspan(t - 5, 6)))
            .normalized_acceleration);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < traj.num_particles(); ++i) {
      if (traj.types[i] != ParticleType::Fluid) continue;
      const Vec2 g = data::normalize((traj.frames[t + 1][i] - traj.frames[t][i]) - (traj.frames[t][i] - traj.frames[t - 1][i]),
                                     norm.acceleration);
      s += (a[i].x - g.x) * (a[i].x - g.x) + (a[i].y - g.y) * (a[i].y - g.y);
      n += 2;
    }
    acc += s / n;
    ++samples;
  }
  EXPECT_NEAR(mse_acc_1(model, traj), acc / samples, 1e-12 * std::max(1.0, acc / samples));

  std::vector<std::vector<Vec2>> window(traj.frames.begin(), traj.frames.begin() + 6);
  std::vector<double> curve;
  for (std::size_t k = 0; k + 6 < traj.num_frames(); ++k) {
    auto next = net::predict_step(params, norm, traj.types, bounds, window);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < traj.num_particles(); ++i) {
      if (traj.types[i] != ParticleType::Fluid) continue;
      const Vec2 e = next[i] - traj.frames[k + 6][i];
      s += e.x * e.x + e.y * e.y;
      n += 2;
    }
    curve.push_back(s / n);
    window.erase(window.begin());
    window.push_back(next);
  }
  const auto full = mse_400(model, traj);
  ASSERT_EQ(full.curve.size(), curve.size());
  for (std::size_t k = 0; k < curve.size(); ++k) EXPECT_NEAR(full.curve[k], curve[k], 1e-12 * std::max(1.0, curve[k]));
  const double one = fluid_squared_error(
      model.next(all.subspan(0, 6), StepContext{traj, 5}), traj.frames[6], traj.types);
  EXPECT_EQ(full.curve[0], one);
}

TEST(Metrics, ObstaclesAreNotScored) {
  const std::vector<ParticleType> types{ParticleType::Fluid, ParticleType::Obstacle};
  const std::vector<Vec2> a{{0.5, 0.5}, {0.1, 0.1}}, b{{0.5, 0.5}, {0.9, 0.9}};
  EXPECT_EQ(fluid_squared_error(a, b, types), 0.0);
  EXPECT_EQ(fluid_points(b, types).size(), 1u);
}

TEST(Metrics, ReportAggregationAndCsv) {
  const auto& d = small_dataset();
  const GnsPredictor model(net::make_gns_params(tiny_model(), 6), d.normalizer());
  EvalOptions opt;
  opt.jobs = 2;
  const auto r1 = evaluate(model, d, "tiny", opt);
  const auto r2 = evaluate(model, d, "tiny");
  const std::vector<MetricReport> a{r1}, b{r2};
  EXPECT_EQ(report_csv(a), report_csv(b));
  EXPECT_EQ(curves_csv(a), curves_csv(b));
  double s = 0.0;
  for (const auto& row : r1.rows) s += row.mse_400;
  EXPECT_NEAR(r1.mse_400.mean, s / r1.rows.size(), 1e-12 * r1.mse_400.mean);
  for (const Range* rg : {&r1.emd, &r1.mse_acc_1, &r1.mse_20, &r1.mse_400}) {
    EXPECT_LE(rg->min, rg->mean);
    EXPECT_LE(rg->mean, rg->max);
  }
  EXPECT_EQ(summary_json(a)["models"][0]["trajectories"], 2);
  EXPECT_EQ(r1.emd_curve.steps.front(), 9u);
}

TEST(Selection, PlantedScores) {
  const std::vector<double> scores{0.5, 0.2, 0.7, 0.2, 0.9};
  const std::vector<std::uint64_t> steps{0, 100, 200, 300, 400};
  EXPECT_EQ(argmin_latest(scores, steps), 3u);
  EXPECT_EQ(argmin_latest(std::vector<double>{1.0}, std::vector<std::uint64_t>{7}), 0u);
  EXPECT_THROW(argmin_latest(std::vector<double>{}, std::vector<std::uint64_t>{}), ContractError);
}

TEST(Selection, PicksOracleCheckpoint) {
  const auto& d = small_dataset();
  const auto norm = d.normalizer();
  auto gt = std::make_shared<GroundTruthPredictor>(norm);
  std::vector<Candidate> c{{100, std::make_shared<ZeroAccelerationPredictor>(norm)},
                           {200, gt},
                           {300, std::make_shared<OffsetPredictor>(gt, Vec2{1e-3, 0}, Vec2{})}};
  const auto s = select_checkpoint(c, d.trajectories);
  EXPECT_EQ(s.step, 200u);
  EXPECT_EQ(s.scores[1], 0.0);
  EXPECT_EQ(select_checkpoint(std::span(c).subspan(2, 1), d.trajectories).step, 300u);
  EXPECT_THROW(select_checkpoint(std::vector<Candidate>{}, d.trajectories), ContractError);
}

TEST(Neighbors, TrivialCounts) {
  data::Trajectory lone;
  lone.types = {ParticleType::Fluid};
  lone.frames.assign(5, {{0.5, 0.5}});
  const auto s = neighbor_stats(std::span(&lone, 1), 0.03);
  for (double m : s.mean) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(s.histogram[0], (std::vector<std::uint64_t>{1}));

  data::Trajectory pair;
  pair.types = {ParticleType::Fluid, ParticleType::Fluid};
  pair.frames.assign(5, {{0.5, 0.5}, {0.51, 0.5}});
  const auto p = neighbor_stats(std::span(&pair, 1), 0.03);
  for (double m : p.mean) EXPECT_EQ(m, 1.0);
  EXPECT_EQ(p.histogram[4], (std::vector<std::uint64_t>{0, 2}));
  EXPECT_EQ(p.drift(0), 0.0);
  EXPECT_THROW(neighbor_stats(std::span(&pair, 1), 0.0), ConfigError);
}

TEST(Render, WritesPngWithGuide) {
  const std::vector<Vec2> pts{{0.5, 0.5}, {0.2, 1.5}};
  const std::vector<ParticleType> types{ParticleType::Fluid, ParticleType::Obstacle};
  RenderOptions opt;
  opt.pixels_per_unit = 200;
  opt.guide_y = 0.9;
  const auto img = render_frame(pts, types, data::ScaleMap(32, 64), opt);
  EXPECT_EQ(img.width, 200);
  EXPECT_EQ(img.height, 380);
  EXPECT_EQ(img.at(100, 379 - 100), opt.fluid);
  EXPECT_EQ(img.at(40, 379 - 300), opt.obstacle);
  EXPECT_EQ(img.at(24, 379 - 180), opt.guide);
  const auto path = std::filesystem::temp_directory_path() / "gns_render_test" / "f.png";
  write_png(path, img);
  std::ifstream in(path, std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  EXPECT_EQ(std::string(sig + 1, 3), "PNG");
}

TEST(Generalization, OracleIsExactOnTallDomain) {
  flip::SceneSpec tall = tall_scene_spec();
  tall.steps = 30;
  std::vector<data::Trajectory> scenes{data::make_trajectory(flip::simulate_trajectory(5, tall, {}))};
  const std::vector<std::string> names{"tall_0"};
  EXPECT_EQ(scenes[0].scale().upper().y, 1.8);
  const auto norm = small_dataset().normalizer();
  std::vector<GeneralizationModel> models{{"gt", std::make_shared<GroundTruthPredictor>(norm), false},
                                          {"gt_walls", std::make_shared<GroundTruthPredictor>(norm), true}};
  GeneralizationOptions opt;
  opt.render_dir = std::filesystem::temp_directory_path() / "gns_generalize_test";
  opt.render_every = 20;
  const auto runs = generalization_experiment(models, scenes, names, opt);
  ASSERT_EQ(runs.size(), 2u);
  for (const auto& r : runs)
    for (double v : r.emd.values) EXPECT_EQ(v, 0.0);
  EXPECT_GT(runs[1].source->num_particles(), scenes[0].num_particles());
  EXPECT_TRUE(std::filesystem::exists(opt.render_dir / "tall_0" / frame_file_name("gt", 6)));
  EXPECT_NE(generalization_csv(runs).find("gt_walls,tall_0,9,15,0,0"), std::string::npos);
}

}  // namespace
}  // namespace gns::eval
