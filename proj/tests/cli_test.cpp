#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("gns_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  static const struct Cleanup {
    ~Cleanup() { fs::remove_all(dir); }
  } cleanup;
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(GNS_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dir(const std::string& name) { return (scratch() / name).string(); }

// Simulated once per process; later tests reuse it.
const std::string& data_dir() {
  static const std::string d = [] {
    const std::string out = dir("data");
    if (run("gen-data --count 2 --frames 30 --seed 3 --out " + out) != 0) throw std::runtime_error("gen-data failed");
    return out;
  }();
  return d;
}

TEST(Cli, GenDataIsDeterministic) {
  const std::string other = dir("data_again");
  ASSERT_EQ(run("gen-data --count 2 --frames 30 --seed 3 --out " + other), 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(data_dir())) {
    const fs::path twin = fs::path(other) / e.path().filename();
    ASSERT_TRUE(fs::exists(twin)) << twin;
    EXPECT_TRUE(slurp(e.path()) == slurp(twin)) << e.path().filename();
    ++files;
  }
  EXPECT_EQ(files, 3u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("gen-data --count 2 --frames 30 --out " + data_dir()), 2);
  EXPECT_EQ(run("train --data " + dir("missing") + " --out " + dir("x")), 3);
  EXPECT_EQ(run("train --data " + data_dir() + " --variant 3s --out " + dir("x")), 2);
  EXPECT_EQ(run("train --data " + data_dir() + " --variant 2si --steps 1 --out " + dir("x")), 2);
  EXPECT_EQ(run("eval --data " + data_dir() + " --out " + dir("x")), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  std::ofstream(scratch() / "junk.bin") << "junk";
  EXPECT_EQ(run("eval --data " + data_dir() + " --checkpoint " + dir("junk.bin") + " --out " + dir("x2")), 3);
}

TEST(Cli, BaselineReportIsReproducibleAndOracleIsZero) {
  ASSERT_EQ(run("eval --data " + data_dir() + " --baselines --out " + dir("eval_a")), 0);
  ASSERT_EQ(run("eval --data " + data_dir() + " --baselines --out " + dir("eval_b")), 0);
  const std::string a = slurp(fs::path(dir("eval_a")) / "report.csv");
  EXPECT_EQ(a, slurp(fs::path(dir("eval_b")) / "report.csv"));
  std::istringstream rows(a);
  std::string line;
  int gt_rows = 0;
  while (std::getline(rows, line)) {
    if (line.rfind("ground_truth,", 0) != 0) continue;
    ++gt_rows;
    std::istringstream cells(line);
    std::string cell;
    std::getline(cells, cell, ',');
    std::getline(cells, cell, ',');
    while (std::getline(cells, cell, ',')) EXPECT_EQ(std::stod(cell), 0.0) << line;
  }
  EXPECT_EQ(gt_rows, 5);  // two trajectories plus mean, min, max
}

TEST(Cli, TrainThenSelect) {
  const std::string run_dir = dir("run");
  ASSERT_EQ(run("train --data " + data_dir() + " --steps 4 --checkpoint-interval 2 --out " + run_dir), 0);
  for (const char* f : {"config.json", "metrics.csv", "checkpoints/ckpt_00000000.bin", "checkpoints/ckpt_00000004.bin"})
    EXPECT_TRUE(fs::exists(fs::path(run_dir) / f)) << f;
  ASSERT_EQ(run("select --run " + run_dir + " --validation " + data_dir() + " --out " + dir("sel")), 0);
  const auto j = nlohmann::json::parse(slurp(fs::path(dir("sel")) / "selection.json"));
  ASSERT_EQ(j.at("scores").size(), 3u);
  double best = 1e300;
  std::uint64_t best_step = 0;
  for (const auto& s : j.at("scores")) {
    if (s.at("mse_400").get<double>() <= best) {
      best = s.at("mse_400").get<double>();
      best_step = s.at("step").get<std::uint64_t>();
    }
  }
  EXPECT_EQ(j.at("step").get<std::uint64_t>(), best_step);
}

TEST(Cli, NeighborsSummary) {
  ASSERT_EQ(run("neighbors --data " + data_dir() + " --plateau-from 10 --out " + dir("nb")), 0);
  const auto j = nlohmann::json::parse(slurp(fs::path(dir("nb")) / "summary.json"));
  EXPECT_EQ(j.at("frames").get<int>(), 30);
  EXPECT_GE(j.at("plateau_drift").get<double>(), 0.0);
}

}  // namespace
