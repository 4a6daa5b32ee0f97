#include "satv2x/eval.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace satv2x {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("report: number format failure");
  return std::string(buf, end);
}

double parse_num(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error("report: bad number '" + s + "' in metrics.csv");
  return v;
}

}  // namespace

EstimationMetrics estimation_metrics(std::span<const double> predictions,
                                     std::span<const double> targets) {
  if (predictions.size() != targets.size())
    throw std::invalid_argument("estimation_metrics: length mismatch");
  if (predictions.size() < 2)
    throw std::invalid_argument("estimation_metrics: need at least two samples");
  const double n = static_cast<double>(predictions.size());

  double se = 0.0, ae = 0.0, tmean = 0.0, hits = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    se += d * d;
    ae += std::abs(d);
    tmean += targets[i];
    if (std::abs(d) <= 0.5) hits += 1.0;
  }
  tmean /= n;
  double ss_tot = 0.0;
  for (double t : targets) ss_tot += (t - tmean) * (t - tmean);

  EstimationMetrics m;
  m.mse = se / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / n;
  m.accuracy = hits / n;
  if (ss_tot > 0.0) {
    m.r2 = 1.0 - se / ss_tot;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.r2_valid = false;
  }
  return m;
}

void standardize_by_feature(std::span<const double> predictions,
                            std::span<const double> targets, int feature_dim,
                            std::vector<double>& pred_z, std::vector<double>& tgt_z) {
  if (predictions.size() != targets.size())
    throw std::invalid_argument("standardize: length mismatch");
  if (feature_dim < 1 || predictions.size() % static_cast<std::size_t>(feature_dim) != 0)
    throw std::invalid_argument("standardize: length must be a multiple of feature_dim");
  const std::size_t fd = static_cast<std::size_t>(feature_dim);

  std::vector<double> mean(fd, 0.0), var(fd, 0.0), count(fd, 0.0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    mean[i % fd] += targets[i];
    count[i % fd] += 1.0;
  }
  for (std::size_t f = 0; f < fd; ++f) mean[f] /= std::max(1.0, count[f]);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = targets[i] - mean[i % fd];
    var[i % fd] += d * d;
  }
  std::vector<double> sd(fd, 0.0);
  for (std::size_t f = 0; f < fd; ++f)
    sd[f] = count[f] > 0.0 ? std::sqrt(var[f] / count[f]) : 0.0;

  pred_z.clear();
  tgt_z.clear();
  pred_z.reserve(predictions.size());
  tgt_z.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t f = i % fd;
    if (sd[f] < 1e-9) continue;  // constant feature carries no signal
    pred_z.push_back((predictions[i] - mean[f]) / sd[f]);
    tgt_z.push_back((targets[i] - mean[f]) / sd[f]);
  }
}

double utility_summary(std::span<const double> episode_utilities) {
  if (episode_utilities.empty())
    throw std::invalid_argument("utility_summary: empty input");
  double acc = 0.0;
  for (double u : episode_utilities) acc += u;
  return acc / static_cast<double>(episode_utilities.size());
}

ActionShares action_distribution(const std::array<long, kModeCount>& mode_counts) {
  long total = 0;
  for (long c : mode_counts) total += c;
  if (total <= 0) throw std::invalid_argument("action_distribution: empty trace");
  ActionShares s;
  s.v2i_pct = 100.0 * mode_counts[static_cast<int>(Mode::kV2I)] / total;
  s.v2s_pct = 100.0 * mode_counts[static_cast<int>(Mode::kV2S)] / total;
  s.v2v_pct = 100.0 * mode_counts[static_cast<int>(Mode::kV2V)] / total;
  return s;
}

ActionShares action_distribution(std::span<const StepRecord> trace) {
  std::array<long, kModeCount> counts{};
  for (const StepRecord& r : trace) ++counts[static_cast<std::size_t>(static_cast<int>(r.mode))];
  return action_distribution(counts);
}

RunReport make_report(const RunConfig& cfg, std::uint64_t seed, const TrainOutcome& outcome) {
  RunReport rep;
  rep.config_hash = hash_hex(cfg.hash());
  rep.variant = cfg.learner.variant;
  rep.seed = seed;
  rep.sharing_level = cfg.learner.sharing_level;
  rep.series = outcome.series;
  rep.violations = outcome.violations;
  rep.contention_losses = outcome.contention_losses;

  const int window = std::min<int>(cfg.learner.metrics_window,
                                   static_cast<int>(outcome.series.size()));
  std::vector<double> utils, rewards;
  for (std::size_t i = outcome.series.size() - static_cast<std::size_t>(window);
       i < outcome.series.size(); ++i) {
    utils.push_back(outcome.series[i].utility);
    rewards.push_back(outcome.series[i].mean_reward);
  }
  rep.window_utility = utility_summary(utils);
  rep.window_mean_reward = utility_summary(rewards);

  long total_modes = 0;
  for (long c : outcome.window_mode_counts) total_modes += c;
  if (total_modes > 0) rep.action_shares = action_distribution(outcome.window_mode_counts);

  if (outcome.est_pred.size() >= 2) {
    std::vector<double> pz, tz;
    standardize_by_feature(outcome.est_pred, outcome.est_tgt, kObsFeatures, pz, tz);
    if (pz.size() >= 2) rep.estimation = estimation_metrics(pz, tz);
  }
  return rep;
}

nlohmann::json summary_to_json(const RunReport& r) {
  nlohmann::json j;
  j["schema_version"] = r.schema_version;
  j["config_hash"] = r.config_hash;
  j["variant"] = r.variant;
  j["seed"] = r.seed;
  j["sharing_level"] = r.sharing_level;
  j["episodes"] = r.series.size();
  j["window_utility"] = r.window_utility;
  j["window_mean_reward"] = r.window_mean_reward;
  if (r.estimation) {
    nlohmann::json e;
    e["mse"] = r.estimation->mse;
    e["rmse"] = r.estimation->rmse;
    e["mae"] = r.estimation->mae;
    if (r.estimation->r2_valid)
      e["r2"] = r.estimation->r2;
    else
      e["r2"] = nullptr;
    e["accuracy"] = r.estimation->accuracy;
    j["estimation"] = e;
  } else {
    j["estimation"] = nullptr;
  }
  nlohmann::json shares;
  shares["v2i_pct"] = r.action_shares.v2i_pct;
  shares["v2s_pct"] = r.action_shares.v2s_pct;
  shares["v2v_pct"] = r.action_shares.v2v_pct;
  j["action_shares"] = shares;
  nlohmann::json diag;
  diag["violations"] = r.violations;
  diag["contention_losses"] = r.contention_losses;
  j["diagnostics"] = diag;
  return j;
}

RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.schema_version = j.at("schema_version").get<int>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.variant = j.at("variant").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.sharing_level = j.at("sharing_level").get<double>();
  r.window_utility = j.at("window_utility").get<double>();
  r.window_mean_reward = j.at("window_mean_reward").get<double>();
  if (!j.at("estimation").is_null()) {
    EstimationMetrics m;
    const auto& e = j.at("estimation");
    m.mse = e.at("mse").get<double>();
    m.rmse = e.at("rmse").get<double>();
    m.mae = e.at("mae").get<double>();
    if (e.at("r2").is_null()) {
      m.r2_valid = false;
      m.r2 = std::numeric_limits<double>::quiet_NaN();
    } else {
      m.r2 = e.at("r2").get<double>();
    }
    m.accuracy = e.at("accuracy").get<double>();
    r.estimation = m;
  }
  const auto& shares = j.at("action_shares");
  r.action_shares.v2i_pct = shares.at("v2i_pct").get<double>();
  r.action_shares.v2s_pct = shares.at("v2s_pct").get<double>();
  r.action_shares.v2v_pct = shares.at("v2v_pct").get<double>();
  const auto& diag = j.at("diagnostics");
  r.violations = diag.at("violations").get<long>();
  r.contention_losses = diag.at("contention_losses").get<long>();
  return r;
}

void export_report(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto csv_path = dir / "metrics.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("report: cannot write " + csv_path.string());
  csv << "episode,mean_reward,utility,actor_loss,critic_loss,sil_loss,est_mse\n";
  for (const EpisodeMetrics& m : report.series) {
    csv << m.episode << ',' << fmt(m.mean_reward) << ',' << fmt(m.utility) << ','
        << fmt(m.actor_loss) << ',' << fmt(m.critic_loss) << ',' << fmt(m.sil_loss) << ','
        << fmt(m.est_mse) << '\n';
  }
  if (!csv) throw std::runtime_error("report: write failed for " + csv_path.string());

  const auto json_path = dir / "summary.json";
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("report: cannot write " + json_path.string());
  js << summary_to_json(report).dump(2) << '\n';
  if (!js) throw std::runtime_error("report: write failed for " + json_path.string());
}

RunReport import_report(const std::filesystem::path& dir) {
  const auto json_path = dir / "summary.json";
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("report: cannot open " + json_path.string());
  nlohmann::json j;
  js >> j;
  RunReport rep = report_from_json(j);

  const auto csv_path = dir / "metrics.csv";
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("report: cannot open " + csv_path.string());
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7)
      throw std::runtime_error("report: malformed row in " + csv_path.string());
    EpisodeMetrics m;
    m.episode = static_cast<int>(parse_num(cells[0]));
    m.mean_reward = parse_num(cells[1]);
    m.utility = parse_num(cells[2]);
    m.actor_loss = parse_num(cells[3]);
    m.critic_loss = parse_num(cells[4]);
    m.sil_loss = parse_num(cells[5]);
    m.est_mse = parse_num(cells[6]);
    rep.series.push_back(m);
  }
  return rep;
}

bool validate_against_schema(const nlohmann::json& value, const nlohmann::json& schema,
                             std::string* error) {
  auto fail = [&](const std::string& msg) {
    if (error) *error = msg;
    return false;
  };
  if (schema.contains("type")) {
    const auto& type = schema.at("type");
    auto matches = [&](const std::string& t) {
      if (t == "object") return value.is_object();
      if (t == "array") return value.is_array();
      if (t == "string") return value.is_string();
      if (t == "number") return value.is_number();
      if (t == "integer") return value.is_number_integer() || value.is_number_unsigned();
      if (t == "boolean") return value.is_boolean();
      if (t == "null") return value.is_null();
      return false;
    };
    bool ok = false;
    if (type.is_string()) {
      ok = matches(type.get<std::string>());
    } else if (type.is_array()) {
      for (const auto& t : type) ok = ok || matches(t.get<std::string>());
    }
    if (!ok) return fail("type mismatch at value " + value.dump());
  }
  if (schema.contains("required") && value.is_object()) {
    for (const auto& key : schema.at("required")) {
      if (!value.contains(key.get<std::string>()))
        return fail("missing required key " + key.get<std::string>());
    }
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema.at("properties").items()) {
      if (!value.contains(key)) continue;
      if (!validate_against_schema(value.at(key), sub, error)) return false;
    }
  }
  if (schema.contains("items") && value.is_array()) {
    for (const auto& item : value)
      if (!validate_against_schema(item, schema.at("items"), error)) return false;
  }
  if (error) error->clear();
  return true;
}

}  // namespace satv2x
