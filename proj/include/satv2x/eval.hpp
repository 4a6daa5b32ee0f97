#pragma once

#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "satv2x/agent.hpp"

namespace satv2x {

struct EstimationMetrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  double accuracy = 0.0;
  bool r2_valid = true;  // false when the targets are constant
};

// Standard regression metrics; accuracy is the fraction of entries within
// 0.5 of the target (callers pass standardized values).
EstimationMetrics estimation_metrics(std::span<const double> predictions,
                                     std::span<const double> targets);

// Z-scores predictions and targets per feature column (entry i belongs to
// column i mod feature_dim) using the target statistics; constant-target
// columns are dropped.
void standardize_by_feature(std::span<const double> predictions,
                            std::span<const double> targets, int feature_dim,
                            std::vector<double>& pred_z, std::vector<double>& tgt_z);

// Mean of per-agent-episode binary utilities.
double utility_summary(std::span<const double> episode_utilities);

struct ActionShares {
  double v2i_pct = 0.0;
  double v2s_pct = 0.0;
  double v2v_pct = 0.0;
};
ActionShares action_distribution(std::span<const StepRecord> trace);
ActionShares action_distribution(const std::array<long, kModeCount>& mode_counts);

struct RunReport {
  int schema_version = 1;
  std::string config_hash;
  std::string variant;
  std::uint64_t seed = 0;
  double sharing_level = 1.0;
  std::vector<EpisodeMetrics> series;
  double window_utility = 0.0;
  double window_mean_reward = 0.0;
  std::optional<EstimationMetrics> estimation;
  ActionShares action_shares;
  long violations = 0;
  long contention_losses = 0;
};

RunReport make_report(const RunConfig& cfg, std::uint64_t seed, const TrainOutcome& outcome);

nlohmann::json summary_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& summary);

// Writes metrics.csv (the per-episode series) and summary.json under dir.
void export_report(const RunReport& report, const std::filesystem::path& dir);
// Reads both files back; export followed by import is lossless.
RunReport import_report(const std::filesystem::path& dir);

// Checks a summary against the JSON-schema subset used by
// docs/summary.schema.json (type / properties / required / items).
bool validate_against_schema(const nlohmann::json& value, const nlohmann::json& schema,
                             std::string* error);

}  // namespace satv2x
