#include "satv2x/runner.hpp"

#include <atomic>
#include <charconv>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "satv2x/rng_util.hpp"

namespace satv2x {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("runner: number format failure");
  return std::string(buf, end);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("runner: cannot write " + path.string());
  os << text;
}

void write_trace(const std::filesystem::path& path, std::span<const StepRecord> trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("runner: cannot write " + path.string());
  os << "t,agent,mode,subchannel,power_dbm,sinr,capacity_bps,reward\n";
  for (const StepRecord& r : trace) {
    os << r.t << ',' << r.agent << ',' << mode_name(r.mode) << ',' << r.subchannel << ','
       << fmt(r.power_dbm) << ',' << fmt(r.sinr) << ',' << fmt(r.capacity_bps) << ','
       << fmt(r.reward) << '\n';
  }
}

// Rollout-only loop shared by the reference policies and checkpoint
// evaluation. `model` may be null for RANDOM / GREEDY_SINR.
TrainOutcome rollout_outcome(const RunConfig& cfg, PolicyModel* model, std::uint64_t seed,
                             std::vector<StepRecord>* trace_sink) {
  Env env(cfg.scenario, cfg.link, derive_seed(seed, 0));
  const LearnerSection& lc = cfg.learner;
  const int T = cfg.scenario.steps_per_episode;
  const int agents = env.agent_count();
  const int window_start = std::max(0, lc.episodes - lc.metrics_window);

  Rng act_rng(derive_seed(seed, 2));
  Rng share_rng(derive_seed(seed, 3));
  std::unique_ptr<StateEstimator> estimator;
  if (model) estimator = std::make_unique<StateEstimator>(*model, agents);

  TrainOutcome out;
  for (int ep = 0; ep < lc.episodes; ++ep) {
    const double progress = lc.episodes > 1 ? static_cast<double>(ep) / (lc.episodes - 1) : 1.0;
    const Fingerprint fp{progress, 1.0 - progress};
    const bool in_window = ep >= window_start;

    std::vector<Observation> obs = env.reset(derive_seed(seed, 1000 + static_cast<std::uint64_t>(ep)));
    if (estimator) estimator->reset();
    double reward_sum = 0.0;
    std::vector<Action> actions(static_cast<std::size_t>(agents));
    for (int t = 0; t < T; ++t) {
      const auto views =
          model ? env.neighbor_views(lc.sharing_level, share_rng)
                : std::vector<std::vector<std::pair<int, Observation>>>{};
      for (int i = 0; i < agents; ++i) {
        if (model) {
          const nn::Tensor o_hat = estimator->estimate(
              i, obs[static_cast<std::size_t>(i)], views[static_cast<std::size_t>(i)], fp);
          actions[static_cast<std::size_t>(i)] = act(*model, o_hat, act_rng, true).action;
        } else if (cfg.learner.variant == "GREEDY_SINR") {
          actions[static_cast<std::size_t>(i)] =
              greedy_sinr_policy(env.action_space(), obs[static_cast<std::size_t>(i)], act_rng);
        } else {
          actions[static_cast<std::size_t>(i)] = random_policy(env.action_space(), act_rng);
        }
      }
      const StepResult sr = env.step(actions);
      reward_sum += sr.global_reward;
      if (in_window)
        for (const Action& a : actions)
          ++out.window_mode_counts[static_cast<std::size_t>(static_cast<int>(a.mode))];
      if (trace_sink) {
        for (StepRecord rec : sr.records) {
          rec.t += ep * T;
          trace_sink->push_back(rec);
        }
      }
      obs = env.observations();
    }
    double completed = 0.0;
    for (const VehicleState& v : env.vehicles()) completed += v.completed ? 1.0 : 0.0;
    EpisodeMetrics row;
    row.episode = ep;
    row.mean_reward = reward_sum / T;
    row.utility = completed / agents;
    out.series.push_back(row);
  }
  out.violations = env.violation_count();
  out.contention_losses = env.contention_loss_count();
  return out;
}

void write_run_outputs(const RunConfig& cfg, const RunReport& report,
                       const std::filesystem::path& out_dir, PolicyModel* model,
                       std::span<const StepRecord> trace) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "effective.cfg", cfg.serialize());
  export_report(report, out_dir);
  if (model) model->params().save(out_dir / "checkpoint.bin");
  if (cfg.run.trace) write_trace(out_dir / "trace.csv", trace);
}

}  // namespace

RunReport run_training(const RunConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir, bool write_files) {
  cfg.validate();
  const VariantToggles toggles = parse_variant(cfg.learner.variant);
  std::vector<StepRecord> trace;
  std::vector<StepRecord>* sink = cfg.run.trace ? &trace : nullptr;

  if (!toggles.learning) {
    const TrainOutcome outcome = rollout_outcome(cfg, nullptr, seed, sink);
    const RunReport report = make_report(cfg, seed, outcome);
    if (write_files) write_run_outputs(cfg, report, out_dir, nullptr, trace);
    return report;
  }

  Trainer trainer(cfg, toggles, seed);
  if (write_files) {
    std::filesystem::create_directories(out_dir);
    trainer.set_diagnostics_path(out_dir / "diagnostic.json");
  }
  trainer.set_trace_sink(sink);
  const TrainOutcome outcome = trainer.run();
  const RunReport report = make_report(cfg, seed, outcome);
  if (write_files) write_run_outputs(cfg, report, out_dir, &trainer.model(), trace);
  return report;
}

RunReport run_evaluation(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                         std::uint64_t seed, const std::filesystem::path& out_dir,
                         bool write_files) {
  cfg.validate();
  const VariantToggles toggles = parse_variant(cfg.learner.variant);
  if (!toggles.learning)
    throw ConfigError("evaluate: variant '" + cfg.learner.variant + "' has no checkpoint");

  Env probe(cfg.scenario, cfg.link, 0);  // only for the action space shape
  PolicyModel model(cfg.learner, probe.action_space(), toggles, derive_seed(seed, 1));
  model.params().load(checkpoint);

  std::vector<StepRecord> trace;
  std::vector<StepRecord>* sink = cfg.run.trace ? &trace : nullptr;
  const TrainOutcome outcome = rollout_outcome(cfg, &model, seed, sink);
  const RunReport report = make_report(cfg, seed, outcome);
  if (write_files) write_run_outputs(cfg, report, out_dir, nullptr, trace);
  return report;
}

void parallel_runs(int count, int workers, const std::function<void(int)>& task) {
  if (count <= 0) return;
  if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

std::string density_tag(double d) {
  std::string s = fmt(d);
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

}  // namespace

AblationResult run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                            const std::vector<double>& densities,
                            const std::vector<std::uint64_t>& seeds,
                            const std::filesystem::path& out_dir, bool write_files) {
  if (variants.empty()) throw ConfigError("ablate: need at least one variant");
  if (densities.empty()) throw ConfigError("ablate: need at least one density");
  for (const std::string& v : variants) parse_variant(v);  // fail fast on unknown tags

  AblationResult res;
  res.variants = variants;
  res.densities = densities;
  const int total = static_cast<int>(variants.size() * densities.size() * seeds.size());
  res.cells.resize(static_cast<std::size_t>(total));

  parallel_runs(total, base.run.workers, [&](int idx) {
    const std::size_t vi = static_cast<std::size_t>(idx) % variants.size();
    const std::size_t di = (static_cast<std::size_t>(idx) / variants.size()) % densities.size();
    const std::size_t si = static_cast<std::size_t>(idx) / (variants.size() * densities.size());
    RunConfig cfg = base;
    cfg.learner.variant = variants[vi];
    cfg.scenario.density_per_km2 = densities[di];
    const std::string sub = variants[vi] + "_d" + density_tag(densities[di]) + "_s" +
                            std::to_string(seeds[si]);
    cfg.run.out_dir = (out_dir / sub).string();
    const RunReport rep = run_training(cfg, seeds[si], out_dir / sub, write_files);
    res.cells[static_cast<std::size_t>(idx)] =
        AblationCell{variants[vi], densities[di], seeds[si], rep.window_utility};
  });

  res.mean_utility.assign(variants.size(), std::vector<double>(densities.size(), 0.0));
  for (std::size_t vi = 0; vi < variants.size(); ++vi)
    for (std::size_t di = 0; di < densities.size(); ++di) {
      double acc = 0.0;
      int n = 0;
      for (const AblationCell& c : res.cells)
        if (c.variant == variants[vi] && c.density == densities[di]) {
          acc += c.utility;
          ++n;
        }
      res.mean_utility[vi][di] = acc / std::max(1, n);
    }

  if (write_files) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream csv;
    csv << "variant,density,seed,window_utility\n";
    for (const AblationCell& c : res.cells)
      csv << c.variant << ',' << fmt(c.density) << ',' << c.seed << ',' << fmt(c.utility) << '\n';
    write_text(out_dir / "ablation.csv", csv.str());

    std::ostringstream grid;
    grid << "variant";
    for (double d : densities) grid << ',' << fmt(d);
    grid << '\n';
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      grid << variants[vi];
      for (std::size_t di = 0; di < densities.size(); ++di)
        grid << ',' << fmt(res.mean_utility[vi][di]);
      grid << '\n';
    }
    write_text(out_dir / "ablation_grid.csv", grid.str());

    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_hash"] = hash_hex(base.hash());
    j["command"] = "ablate";
    nlohmann::json grid_j = nlohmann::json::object();
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      nlohmann::json row = nlohmann::json::object();
      for (std::size_t di = 0; di < densities.size(); ++di)
        row[fmt(densities[di])] = res.mean_utility[vi][di];
      grid_j[variants[vi]] = row;
    }
    j["mean_utility"] = grid_j;
    write_text(out_dir / "summary.json", j.dump(2) + "\n");
  }
  return res;
}

SharingResult run_sharing_sweep(const RunConfig& base, const std::vector<double>& levels,
                                const std::vector<std::uint64_t>& seeds,
                                const std::filesystem::path& out_dir, bool write_files) {
  if (levels.empty()) throw ConfigError("sweep-sharing: need at least one level");
  for (double l : levels)
    if (l < 0.0 || l > 1.0) throw ConfigError("sweep-sharing: level outside [0,1]");

  SharingResult res;
  res.levels = levels;
  const int total = static_cast<int>(levels.size() * seeds.size());
  res.cells.resize(static_cast<std::size_t>(total));

  parallel_runs(total, base.run.workers, [&](int idx) {
    const std::size_t li = static_cast<std::size_t>(idx) % levels.size();
    const std::size_t si = static_cast<std::size_t>(idx) / levels.size();
    RunConfig cfg = base;
    cfg.learner.sharing_level = levels[li];
    const std::string sub = "share" + density_tag(levels[li]) + "_s" + std::to_string(seeds[si]);
    cfg.run.out_dir = (out_dir / sub).string();
    const RunReport rep = run_training(cfg, seeds[si], out_dir / sub, write_files);
    SharingCell cell;
    cell.level = levels[li];
    cell.seed = seeds[si];
    if (rep.estimation) {
      cell.metrics = *rep.estimation;
      cell.has_metrics = true;
    }
    res.cells[static_cast<std::size_t>(idx)] = cell;
  });

  res.mean_metrics.assign(levels.size(), EstimationMetrics{});
  for (std::size_t li = 0; li < levels.size(); ++li) {
    EstimationMetrics& m = res.mean_metrics[li];
    int n = 0;
    for (const SharingCell& c : res.cells) {
      if (c.level != levels[li] || !c.has_metrics) continue;
      m.mse += c.metrics.mse;
      m.rmse += c.metrics.rmse;
      m.mae += c.metrics.mae;
      m.r2 += c.metrics.r2;
      m.accuracy += c.metrics.accuracy;
      ++n;
    }
    if (n > 0) {
      m.mse /= n;
      m.rmse /= n;
      m.mae /= n;
      m.r2 /= n;
      m.accuracy /= n;
    }
  }

  if (write_files) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream csv;
    csv << "sharing_pct,seed,mse,rmse,mae,r2,accuracy\n";
    for (const SharingCell& c : res.cells) {
      csv << fmt(c.level * 100.0) << ',' << c.seed << ',';
      if (c.has_metrics) {
        csv << fmt(c.metrics.mse) << ',' << fmt(c.metrics.rmse) << ',' << fmt(c.metrics.mae)
            << ',' << (c.metrics.r2_valid ? fmt(c.metrics.r2) : "") << ','
            << fmt(c.metrics.accuracy);
      } else {
        csv << ",,,,";
      }
      csv << '\n';
    }
    write_text(out_dir / "sharing.csv", csv.str());

    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_hash"] = hash_hex(base.hash());
    j["command"] = "sweep-sharing";
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t li = 0; li < levels.size(); ++li) {
      nlohmann::json row;
      row["sharing_pct"] = levels[li] * 100.0;
      row["mse"] = res.mean_metrics[li].mse;
      row["rmse"] = res.mean_metrics[li].rmse;
      row["mae"] = res.mean_metrics[li].mae;
      row["r2"] = res.mean_metrics[li].r2;
      row["accuracy"] = res.mean_metrics[li].accuracy;
      rows.push_back(row);
    }
    j["levels"] = rows;
    write_text(out_dir / "summary.json", j.dump(2) + "\n");
  }
  return res;
}

DensityResult run_density_sweep(const RunConfig& base, const std::vector<double>& densities,
                                const std::vector<std::uint64_t>& seeds,
                                const std::filesystem::path& out_dir, bool write_files) {
  if (densities.empty()) throw ConfigError("sweep-density: need at least one density");

  DensityResult res;
  res.densities = densities;
  const int total = static_cast<int>(densities.size() * seeds.size());
  res.cells.resize(static_cast<std::size_t>(total));

  parallel_runs(total, base.run.workers, [&](int idx) {
    const std::size_t di = static_cast<std::size_t>(idx) % densities.size();
    const std::size_t si = static_cast<std::size_t>(idx) / densities.size();
    RunConfig cfg = base;
    cfg.scenario.density_per_km2 = densities[di];
    const std::string sub = "d" + density_tag(densities[di]) + "_s" + std::to_string(seeds[si]);
    cfg.run.out_dir = (out_dir / sub).string();
    const RunReport rep = run_training(cfg, seeds[si], out_dir / sub, write_files);
    res.cells[static_cast<std::size_t>(idx)] = DensityCell{densities[di], seeds[si], rep.window_utility};
  });

  res.mean_utility.assign(densities.size(), 0.0);
  for (std::size_t di = 0; di < densities.size(); ++di) {
    double acc = 0.0;
    int n = 0;
    for (const DensityCell& c : res.cells)
      if (c.density == densities[di]) {
        acc += c.utility;
        ++n;
      }
    res.mean_utility[di] = acc / std::max(1, n);
  }

  if (write_files) {
    std::filesystem::create_directories(out_dir);
    std::ostringstream csv;
    csv << "density,seed,window_utility\n";
    for (const DensityCell& c : res.cells)
      csv << fmt(c.density) << ',' << c.seed << ',' << fmt(c.utility) << '\n';
    write_text(out_dir / "density.csv", csv.str());

    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_hash"] = hash_hex(base.hash());
    j["command"] = "sweep-density";
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t di = 0; di < densities.size(); ++di) {
      nlohmann::json row;
      row["density"] = densities[di];
      row["mean_utility"] = res.mean_utility[di];
      rows.push_back(row);
    }
    j["densities"] = rows;
    write_text(out_dir / "summary.json", j.dump(2) + "\n");
  }
  return res;
}

}  // namespace satv2x
