#pragma once

#include <functional>

#include "satv2x/baselines.hpp"
#include "satv2x/eval.hpp"

namespace satv2x {

// One complete run for (config, seed): trains a learner variant or rolls
// out a reference policy, then writes effective.cfg, metrics.csv,
// summary.json, checkpoint.bin (learning variants) and trace.csv (when
// enabled) under out_dir. Pass write_files = false for in-memory use.
RunReport run_training(const RunConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir, bool write_files = true);

// Rollout-only episodes from a stored checkpoint; no updates.
RunReport run_evaluation(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                         std::uint64_t seed, const std::filesystem::path& out_dir,
                         bool write_files = true);

struct AblationCell {
  std::string variant;
  double density = 0.0;
  std::uint64_t seed = 0;
  double utility = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::vector<std::string> variants;
  std::vector<double> densities;
  // mean over seeds, indexed [variant][density]
  std::vector<std::vector<double>> mean_utility;
};

AblationResult run_ablation(const RunConfig& base, const std::vector<std::string>& variants,
                            const std::vector<double>& densities,
                            const std::vector<std::uint64_t>& seeds,
                            const std::filesystem::path& out_dir, bool write_files = true);

struct SharingCell {
  double level = 0.0;
  std::uint64_t seed = 0;
  EstimationMetrics metrics;
  bool has_metrics = false;
};

struct SharingResult {
  std::vector<SharingCell> cells;
  std::vector<double> levels;
  std::vector<EstimationMetrics> mean_metrics;  // per level, over seeds with metrics
};

SharingResult run_sharing_sweep(const RunConfig& base, const std::vector<double>& levels,
                                const std::vector<std::uint64_t>& seeds,
                                const std::filesystem::path& out_dir, bool write_files = true);

struct DensityCell {
  double density = 0.0;
  std::uint64_t seed = 0;
  double utility = 0.0;
};

struct DensityResult {
  std::vector<DensityCell> cells;
  std::vector<double> densities;
  std::vector<double> mean_utility;  // per density
};

DensityResult run_density_sweep(const RunConfig& base, const std::vector<double>& densities,
                                const std::vector<std::uint64_t>& seeds,
                                const std::filesystem::path& out_dir, bool write_files = true);

// Runs indexed tasks on up to `workers` threads (0 = one per core). Results
// are collected by index, so output order never depends on scheduling.
void parallel_runs(int count, int workers, const std::function<void(int)>& task);

}  // namespace satv2x
