#include <doctest.h>

#include <fstream>
#include <sstream>

#include "satv2x/runner.hpp"

using namespace satv2x;

namespace {

RunConfig quick_config() {
  RunConfig cfg;
  cfg.scenario.density_per_km2 = 4.0;
  cfg.scenario.terrestrial_subchannels = 2;
  cfg.scenario.satellite_subchannels = 2;
  cfg.scenario.satellite_bandwidth_hz = 2e6;
  cfg.scenario.steps_per_episode = 15;
  cfg.scenario.load_bits = 2e5;
  cfg.learner.episodes = 4;
  cfg.learner.minibatch = 16;
  cfg.learner.gru_hidden = 6;
  cfg.learner.attention_dim = 6;
  cfg.learner.heads = 2;
  cfg.learner.actor_hidden = 8;
  cfg.learner.critic_hidden = 8;
  cfg.learner.est_hidden = 6;
  cfg.learner.est_max_neighbors = 2;
  cfg.learner.metrics_window = 2;
  cfg.learner.sil_samples = 16;
  cfg.run.workers = 1;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("training run writes the full output set and reruns byte-identically") {
  RunConfig cfg = quick_config();
  cfg.run.trace = true;
  const auto dir = std::filesystem::temp_directory_path() / "satv2x_run_test";
  std::filesystem::remove_all(dir);

  const RunReport rep = run_training(cfg, 7, dir);
  CHECK(std::filesystem::exists(dir / "summary.json"));
  CHECK(std::filesystem::exists(dir / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "effective.cfg"));
  CHECK(std::filesystem::exists(dir / "checkpoint.bin"));
  CHECK(std::filesystem::exists(dir / "trace.csv"));
  CHECK(rep.series.size() == 4);

  // the echoed config parses back to the one that ran
  const RunConfig echoed = RunConfig::load(dir / "effective.cfg");
  CHECK(echoed.serialize() == cfg.serialize());

  const std::string summary1 = slurp(dir / "summary.json");
  const std::string trace1 = slurp(dir / "trace.csv");
  run_training(cfg, 7, dir);  // rerun in place
  CHECK(slurp(dir / "summary.json") == summary1);
  CHECK(slurp(dir / "trace.csv") == trace1);

  // trace rows: agents x slots x episodes
  std::istringstream tl(trace1);
  std::string line;
  long rows = -1;  // header
  while (std::getline(tl, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4L * 15 * 4);

  std::filesystem::remove_all(dir);
}

TEST_CASE("reference policies run through the same pipeline") {
  RunConfig cfg = quick_config();
  cfg.learner.variant = "RANDOM";
  const auto dir = std::filesystem::temp_directory_path() / "satv2x_run_random";
  std::filesystem::remove_all(dir);
  const RunReport rep = run_training(cfg, 3, dir);
  CHECK_FALSE(rep.estimation.has_value());
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoint.bin"));
  CHECK(rep.series.size() == 4);
  // summary declares a null estimation block
  CHECK(slurp(dir / "summary.json").find("\"estimation\": null") != std::string::npos);
  std::filesystem::remove_all(dir);

  cfg.learner.variant = "GREEDY_SINR";
  const RunReport greedy = run_training(cfg, 3, dir, /*write_files=*/false);
  CHECK(greedy.series.size() == 4);
}

TEST_CASE("evaluation restores a checkpoint and stays deterministic") {
  RunConfig cfg = quick_config();
  const auto dir = std::filesystem::temp_directory_path() / "satv2x_run_eval";
  std::filesystem::remove_all(dir);
  run_training(cfg, 11, dir / "train");

  RunConfig eval_cfg = cfg;
  eval_cfg.learner.episodes = 3;
  const RunReport a =
      run_evaluation(eval_cfg, dir / "train" / "checkpoint.bin", 5, dir / "eval");
  const RunReport b =
      run_evaluation(eval_cfg, dir / "train" / "checkpoint.bin", 5, dir / "eval2");
  REQUIRE(a.series.size() == 3);
  for (std::size_t i = 0; i < a.series.size(); ++i)
    CHECK(a.series[i].mean_reward == b.series[i].mean_reward);

  CHECK_THROWS(run_evaluation(eval_cfg, dir / "missing.bin", 5, dir / "eval3",
                              /*write_files=*/false));
  std::filesystem::remove_all(dir);
}

TEST_CASE("ablation grid has the requested shape") {
  RunConfig cfg = quick_config();
  cfg.learner.episodes = 2;
  const auto dir = std::filesystem::temp_directory_path() / "satv2x_run_ablate";
  std::filesystem::remove_all(dir);
  const AblationResult res = run_ablation(cfg, {"FULL", "NO_SIL", "RANDOM"}, {4.0, 6.0},
                                          {1, 2}, dir);
  CHECK(res.cells.size() == 3 * 2 * 2);
  REQUIRE(res.mean_utility.size() == 3);
  REQUIRE(res.mean_utility[0].size() == 2);
  CHECK(std::filesystem::exists(dir / "ablation.csv"));
  CHECK(std::filesystem::exists(dir / "ablation_grid.csv"));
  CHECK(std::filesystem::exists(dir / "summary.json"));

  // grid file: header + one row per variant
  std::istringstream gl(slurp(dir / "ablation_grid.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(gl, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1 + 3);

  CHECK_THROWS_AS(run_ablation(cfg, {"BOGUS"}, {4.0}, {1}, dir, false), ConfigError);
  CHECK_THROWS_AS(run_ablation(cfg, {}, {4.0}, {1}, dir, false), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("sharing sweep emits one row per level and rejects bad levels") {
  RunConfig cfg = quick_config();
  cfg.learner.episodes = 3;
  cfg.learner.metrics_window = 2;
  const auto dir = std::filesystem::temp_directory_path() / "satv2x_run_share";
  std::filesystem::remove_all(dir);
  const SharingResult res = run_sharing_sweep(cfg, {1.0, 0.4}, {1}, dir);
  CHECK(res.cells.size() == 2);
  CHECK(res.levels.size() == 2);
  CHECK(std::filesystem::exists(dir / "sharing.csv"));

  const SharingResult single = run_sharing_sweep(cfg, {0.6}, {1}, dir / "one", false);
  CHECK(single.cells.size() == 1);

  CHECK_THROWS_AS(run_sharing_sweep(cfg, {1.2}, {1}, dir, false), ConfigError);
  CHECK_THROWS_AS(run_sharing_sweep(cfg, {}, {1}, dir, false), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("density sweep and parallel workers agree with serial execution") {
  RunConfig cfg = quick_config();
  cfg.learner.episodes = 2;
  cfg.learner.variant = "RANDOM";

  cfg.run.workers = 1;
  const DensityResult serial =
      run_density_sweep(cfg, {4.0, 8.0}, {1, 2}, "unused", /*write_files=*/false);
  cfg.run.workers = 2;
  const DensityResult parallel =
      run_density_sweep(cfg, {4.0, 8.0}, {1, 2}, "unused", /*write_files=*/false);
  REQUIRE(serial.cells.size() == parallel.cells.size());
  for (std::size_t i = 0; i < serial.cells.size(); ++i) {
    CHECK(serial.cells[i].density == parallel.cells[i].density);
    CHECK(serial.cells[i].seed == parallel.cells[i].seed);
    CHECK(serial.cells[i].utility == parallel.cells[i].utility);
  }
  CHECK(serial.mean_utility == parallel.mean_utility);
}
