#include <doctest.h>

#include <cmath>
#include <fstream>

#include "satv2x/eval.hpp"

using namespace satv2x;

TEST_CASE("estimation metrics: degenerate and hand-computed cases") {
  const std::vector<double> t = {1.0, 2.0, 3.0, 4.0};
  const EstimationMetrics perfect = estimation_metrics(t, t);
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.r2 == doctest::Approx(1.0));
  CHECK(perfect.accuracy == 1.0);

  // predicting the mean zeroes out R^2 by definition
  const std::vector<double> mean_pred(4, 2.5);
  CHECK(estimation_metrics(mean_pred, t).r2 == doctest::Approx(0.0).epsilon(1e-12));

  // spreadsheet-style oracle on a hand-set pair
  const std::vector<double> p = {1.1, 1.8, 3.4, 3.9};
  double se = 0, ae = 0;
  for (int i = 0; i < 4; ++i) {
    se += (p[i] - t[i]) * (p[i] - t[i]);
    ae += std::abs(p[i] - t[i]);
  }
  const double mse = se / 4.0;
  double ss_tot = 0;
  for (double v : t) ss_tot += (v - 2.5) * (v - 2.5);
  const EstimationMetrics m = estimation_metrics(p, t);
  CHECK(m.mse == doctest::Approx(mse).epsilon(1e-12));
  CHECK(m.rmse == doctest::Approx(std::sqrt(mse)).epsilon(1e-12));
  CHECK(m.mae == doctest::Approx(ae / 4.0).epsilon(1e-12));
  CHECK(m.r2 == doctest::Approx(1.0 - se / ss_tot).epsilon(1e-12));
  CHECK(m.accuracy == doctest::Approx(1.0));  // all errors within 0.5

  // constant targets leave R^2 undefined
  const std::vector<double> flat = {2.0, 2.0, 2.0};
  const std::vector<double> ramp = {1.0, 2.0, 3.0};
  const EstimationMetrics c = estimation_metrics(ramp, flat);
  CHECK_FALSE(c.r2_valid);
  CHECK(std::isnan(c.r2));

  const std::vector<double> one = {1.0};
  const std::vector<double> two = {1.0, 2.0};
  CHECK_THROWS_AS(estimation_metrics(one, one), std::invalid_argument);
  CHECK_THROWS_AS(estimation_metrics(two, one), std::invalid_argument);
}

TEST_CASE("metric identities hold on random inputs") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(50), t(50);
    for (auto& v : p) v = u(rng);
    for (auto& v : t) v = u(rng);
    const EstimationMetrics m = estimation_metrics(p, t);
    CHECK(m.rmse * m.rmse == doctest::Approx(m.mse).epsilon(1e-12));
    CHECK(m.mae <= m.rmse + 1e-12);
    CHECK(m.r2 <= 1.0);
  }
}

TEST_CASE("standardization drops constant columns and z-scores the rest") {
  // two features interleaved: col 0 varies, col 1 constant
  const std::vector<double> tgt = {1.0, 7.0, 2.0, 7.0, 3.0, 7.0};
  const std::vector<double> pred = {1.5, 6.0, 2.0, 8.0, 2.5, 7.0};
  std::vector<double> pz, tz;
  standardize_by_feature(pred, tgt, 2, pz, tz);
  REQUIRE(tz.size() == 3);  // constant column dropped
  double mean = 0;
  for (double v : tz) mean += v;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
  double var = 0;
  for (double v : tz) var += v * v;
  CHECK(var / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("utility summary means over agent-episodes") {
  CHECK(utility_summary(std::vector<double>{1.0, 1.0, 1.0}) == 1.0);
  CHECK(utility_summary(std::vector<double>{0.0, 0.0}) == 0.0);
  CHECK(utility_summary(std::vector<double>{1.0, 0.0, 1.0, 0.0}) == 0.5);
  CHECK_THROWS_AS(utility_summary({}), std::invalid_argument);
}

TEST_CASE("action distribution percentages") {
  std::vector<StepRecord> trace(10);
  for (auto& r : trace) r.mode = Mode::kV2V;
  const ActionShares single = action_distribution(trace);
  CHECK(single.v2v_pct == 100.0);
  CHECK(single.v2i_pct == 0.0);

  // near-uniform random modes land close to a third each
  Rng rng(5);
  std::array<long, kModeCount> counts{};
  for (int i = 0; i < 100000; ++i) ++counts[rng() % 3];
  const ActionShares u = action_distribution(counts);
  CHECK(u.v2i_pct == doctest::Approx(100.0 / 3).epsilon(0.03));
  CHECK(u.v2s_pct == doctest::Approx(100.0 / 3).epsilon(0.03));
  CHECK(u.v2v_pct == doctest::Approx(100.0 / 3).epsilon(0.03));
  CHECK(u.v2i_pct + u.v2s_pct + u.v2v_pct == doctest::Approx(100.0).epsilon(1e-9));

  CHECK_THROWS_AS(action_distribution(std::array<long, kModeCount>{}), std::invalid_argument);
}

namespace {

RunReport sample_report() {
  RunReport r;
  r.config_hash = "00c0ffee00c0ffee";
  r.variant = "FULL";
  r.seed = 42;
  r.sharing_level = 0.8;
  for (int i = 0; i < 5; ++i) {
    EpisodeMetrics m;
    m.episode = i;
    m.mean_reward = -0.05 + 0.01 * i;
    m.utility = 0.2 * i;
    m.actor_loss = 0.1 / (i + 1);
    m.critic_loss = 0.2 / (i + 1);
    m.sil_loss = 0.05;
    m.est_mse = 0.3 - 0.02 * i;
    r.series.push_back(m);
  }
  r.window_utility = 0.6;
  r.window_mean_reward = -0.02;
  EstimationMetrics e;
  e.mse = 0.134;
  e.rmse = std::sqrt(0.134);
  e.mae = 0.12;
  e.r2 = 0.86;
  e.accuracy = 0.89;
  r.estimation = e;
  r.action_shares = {20.0, 31.02, 48.98};
  r.violations = 3;
  r.contention_losses = 7;
  return r;
}

}  // namespace

TEST_CASE("report export/import round-trips losslessly") {
  const RunReport r = sample_report();
  const auto dir = std::filesystem::temp_directory_path() / "satv2x_report_test";
  std::filesystem::remove_all(dir);
  export_report(r, dir);
  const RunReport back = import_report(dir);

  CHECK(back.config_hash == r.config_hash);
  CHECK(back.variant == r.variant);
  CHECK(back.seed == r.seed);
  CHECK(back.sharing_level == r.sharing_level);
  CHECK(back.window_utility == r.window_utility);
  REQUIRE(back.series.size() == r.series.size());
  for (std::size_t i = 0; i < r.series.size(); ++i) {
    CHECK(back.series[i].mean_reward == r.series[i].mean_reward);
    CHECK(back.series[i].utility == r.series[i].utility);
    CHECK(back.series[i].est_mse == r.series[i].est_mse);
  }
  REQUIRE(back.estimation.has_value());
  CHECK(back.estimation->mse == r.estimation->mse);
  CHECK(back.action_shares.v2s_pct == r.action_shares.v2s_pct);
  CHECK(back.violations == 3);

  // writing the same report twice produces byte-identical files
  const auto dir2 = std::filesystem::temp_directory_path() / "satv2x_report_test2";
  std::filesystem::remove_all(dir2);
  export_report(r, dir2);
  for (const char* name : {"summary.json", "metrics.csv"}) {
    std::ifstream a(dir / name), b(dir2 / name);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }

  // an empty series still yields valid files with zero rows
  RunReport empty = r;
  empty.series.clear();
  const auto dir3 = std::filesystem::temp_directory_path() / "satv2x_report_test3";
  std::filesystem::remove_all(dir3);
  export_report(empty, dir3);
  const RunReport back3 = import_report(dir3);
  CHECK(back3.series.empty());
  CHECK(back3.window_utility == empty.window_utility);

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
  std::filesystem::remove_all(dir3);
}

TEST_CASE("summary json validates against the shipped schema") {
  const RunReport r = sample_report();
  const nlohmann::json summary = summary_to_json(r);

  std::ifstream is(std::filesystem::path(SATV2X_DOCS_DIR) / "summary.schema.json");
  REQUIRE(is.good());
  nlohmann::json schema;
  is >> schema;

  std::string err;
  CHECK(validate_against_schema(summary, schema, &err));
  CHECK(err.empty());

  // a missing required key fails validation
  nlohmann::json broken = summary;
  broken.erase("window_utility");
  CHECK_FALSE(validate_against_schema(broken, schema, &err));
  CHECK_FALSE(err.empty());

  // null estimation (reference policies) still validates
  RunReport no_est = r;
  no_est.estimation.reset();
  CHECK(validate_against_schema(summary_to_json(no_est), schema, &err));
}
