// satv2x command line: train, evaluate, ablate, sweep-sharing,
// sweep-density, gradcheck. Flags override config file values; the
// effective configuration is echoed next to every output.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "satv2x/gradcheck.hpp"
#include "satv2x/runner.hpp"

namespace {

using satv2x::RunConfig;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  int episodes = -1;
  std::string variant;
  std::vector<double> densities;
  std::vector<double> sharing;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_variant = true) {
  cmd->add_option("--config", f.config_path, "run configuration file");
  cmd->add_option("--out", f.out_dir, "output directory (overrides [run] out_dir)");
  cmd->add_option("--seed", f.seeds, "seed(s); repeat for multi-seed commands");
  cmd->add_option("--episodes", f.episodes, "episode count override");
  if (with_variant) cmd->add_option("--variant", f.variant, "learner variant tag");
  cmd->add_option("--density", f.densities, "vehicular density override(s), veh/km^2");
  cmd->add_option("--sharing", f.sharing, "observation sharing level(s) in [0,1]");
}

RunConfig load_config(const CommonFlags& f) {
  RunConfig cfg = f.config_path.empty() ? RunConfig{} : RunConfig::load(f.config_path);
  if (!f.out_dir.empty()) cfg.run.out_dir = f.out_dir;
  if (!f.seeds.empty()) {
    cfg.run.seed = f.seeds.front();
    cfg.run.seeds = f.seeds;
  }
  if (f.episodes > 0) cfg.learner.episodes = f.episodes;
  if (!f.variant.empty()) cfg.learner.variant = f.variant;
  if (!f.densities.empty()) cfg.scenario.density_per_km2 = f.densities.front();
  if (!f.sharing.empty()) cfg.learner.sharing_level = f.sharing.front();
  cfg.validate();
  return cfg;
}

int run_gradcheck() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = satv2x::run_builtin_gradient_checks(/*seed=*/1234, /*instances=*/20);

  // aggregate instances per op for readable output
  std::vector<std::pair<std::string, double>> per_op;
  bool all_pass = true;
  for (const auto& r : reports) {
    const std::string base = r.name.substr(0, r.name.find('['));
    auto it = std::find_if(per_op.begin(), per_op.end(),
                           [&](const auto& p) { return p.first == base; });
    if (it == per_op.end())
      per_op.emplace_back(base, r.max_rel_err);
    else
      it->second = std::max(it->second, r.max_rel_err);
    if (!r.pass) {
      all_pass = false;
      std::cout << "FAIL " << r.name << " max_rel_err=" << r.max_rel_err << "\n";
    }
  }
  for (const auto& [op, err] : per_op)
    std::cout << (err <= 1e-4 ? "PASS " : "FAIL ") << op << " max_rel_err=" << err << "\n";
  const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (all_pass ? "gradcheck OK" : "gradcheck FAILED") << " (" << reports.size()
            << " cases, " << dt << " s)\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"satellite-aided V2X spectrum workbench"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, ablate_f, share_f, dens_f;
  std::string checkpoint_path;
  std::vector<std::string> ablate_variants;

  CLI::App* train = app.add_subcommand("train", "train one variant and write reports");
  add_common(train, train_f);

  CLI::App* evaluate = app.add_subcommand("evaluate", "roll out a stored checkpoint");
  add_common(evaluate, eval_f);
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "train several variants across densities");
  add_common(ablate, ablate_f, /*with_variant=*/false);
  ablate->add_option("--variant", ablate_variants, "variant tags (repeatable)");

  CLI::App* share = app.add_subcommand("sweep-sharing", "estimation metrics across sharing levels");
  add_common(share, share_f);

  CLI::App* dens = app.add_subcommand("sweep-density", "utility across vehicular densities");
  add_common(dens, dens_f);

  app.add_subcommand("gradcheck", "finite-difference checks over every NN op");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const RunConfig cfg = load_config(train_f);
      const auto rep = satv2x::run_training(cfg, cfg.run.seed, cfg.run.out_dir);
      std::cout << "train done: window utility " << rep.window_utility << ", outputs in "
                << cfg.run.out_dir << "\n";
      return 0;
    }
    if (evaluate->parsed()) {
      const RunConfig cfg = load_config(eval_f);
      const auto rep = satv2x::run_evaluation(cfg, checkpoint_path, cfg.run.seed, cfg.run.out_dir);
      std::cout << "evaluate done: window utility " << rep.window_utility << ", outputs in "
                << cfg.run.out_dir << "\n";
      return 0;
    }
    if (ablate->parsed()) {
      const RunConfig cfg = load_config(ablate_f);
      std::vector<std::string> variants = ablate_variants;
      if (variants.empty()) variants = {"FULL", "NF", "NO_SIL", "MAAC"};
      std::vector<double> densities = ablate_f.densities;
      if (densities.empty()) densities = {cfg.scenario.density_per_km2};
      const auto res = satv2x::run_ablation(cfg, variants, densities, cfg.run.seeds,
                                            cfg.run.out_dir);
      for (std::size_t vi = 0; vi < res.variants.size(); ++vi) {
        std::cout << res.variants[vi] << ":";
        for (double u : res.mean_utility[vi]) std::cout << ' ' << u;
        std::cout << "\n";
      }
      return 0;
    }
    if (share->parsed()) {
      const RunConfig cfg = load_config(share_f);
      std::vector<double> levels = share_f.sharing;
      if (levels.empty()) levels = {1.0, 0.8, 0.6, 0.4};
      const auto res = satv2x::run_sharing_sweep(cfg, levels, cfg.run.seeds, cfg.run.out_dir);
      for (std::size_t li = 0; li < res.levels.size(); ++li)
        std::cout << res.levels[li] * 100 << "%: mse " << res.mean_metrics[li].mse << "\n";
      return 0;
    }
    if (dens->parsed()) {
      const RunConfig cfg = load_config(dens_f);
      std::vector<double> densities = dens_f.densities;
      if (densities.empty())
        densities = {16.95, 25.42, 33.9, 42.37};
      const auto res = satv2x::run_density_sweep(cfg, densities, cfg.run.seeds, cfg.run.out_dir);
      for (std::size_t di = 0; di < res.densities.size(); ++di)
        std::cout << res.densities[di] << " veh/km^2: utility " << res.mean_utility[di] << "\n";
      return 0;
    }
    return run_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
