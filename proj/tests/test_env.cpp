#include <doctest.h>

#include <cmath>
#include <numeric>

#include "satv2x/env.hpp"

using namespace satv2x;

namespace {

ScenarioConfig small_scenario() {
  ScenarioConfig s;
  s.area_x_m = 1000.0;
  s.area_y_m = 1000.0;
  s.density_per_km2 = 4.0;
  s.rsu_count = 4;
  s.terrestrial_subchannels = 2;
  s.satellite_subchannels = 2;
  s.satellite_bandwidth_hz = 2e6;
  s.load_bits = 5e5;
  return s;
}

Action sat_action(const ActionSpace& space, int chan_local = 0, int power = 0) {
  return {Mode::kV2S, space.terrestrial_channels + chan_local, power};
}

}  // namespace

TEST_CASE("reward and utility-pulse semantics") {
  CHECK(reward_value(0, 1000.0, 1000.0, 0.1) == doctest::Approx(-0.1));
  CHECK(reward_value(1, 0.0, 1000.0, 0.1) == doctest::Approx(1.0));
  CHECK(reward_value(0, 500.0, 1000.0, 0.1) == doctest::Approx(-0.05));
  CHECK_THROWS_AS(reward_value(0, 0.0, 0.0, 0.1), std::domain_error);

  CHECK(utility_pulse(600.0, 300.0, 500.0) == 1);
  CHECK(utility_pulse(300.0, 100.0, 500.0) == 0);
  CHECK(utility_pulse(900.0, 600.0, 500.0) == 0);  // already complete
  CHECK_THROWS_AS(utility_pulse(100.0, 200.0, 500.0), std::domain_error);

  // scan oracle over a delivery sequence: the pulse fires exactly once
  const double L = 500.0;
  const double seq[] = {100.0, 300.0, 600.0, 900.0};
  double prev = 0.0;
  int pulses = 0, pulse_at = -1;
  for (int i = 0; i < 4; ++i) {
    if (utility_pulse(seq[i], prev, L)) {
      ++pulses;
      pulse_at = i;
    }
    prev = seq[i];
  }
  CHECK(pulses == 1);
  CHECK(pulse_at == 2);
}

TEST_CASE("mobility advances and wraps") {
  std::vector<VehicleState> v(1);
  v[0].x = 5.0;
  v[0].speed = 10.0;
  v[0].heading_x = 1.0;
  advance_vehicles(v, 0.001, 1000.0);
  CHECK(v[0].x == doctest::Approx(5.01));

  v[0].speed = 0.0;
  advance_vehicles(v, 0.5, 1000.0);
  CHECK(v[0].x == doctest::Approx(5.01));

  v[0].x = 999.5;
  v[0].speed = 10.0;
  advance_vehicles(v, 0.1, 1000.0);
  CHECK(v[0].x == doctest::Approx(0.5));

  v[0].heading_x = -1.0;
  v[0].x = 0.2;
  advance_vehicles(v, 0.1, 1000.0);
  CHECK(v[0].x == doctest::Approx(999.2));
  CHECK_THROWS_AS(advance_vehicles(v, 0.0, 1000.0), std::domain_error);
}

TEST_CASE("reset is bit-identical for a fixed seed and scales with density") {
  ScenarioConfig s = small_scenario();
  LinkBudgetConfig link;
  Env a(s, link, 99);
  Env b(s, link, 99);
  const auto oa = a.reset(1234);
  const auto ob = b.reset(1234);
  REQUIRE(a.agent_count() == 4);
  CHECK(a.agent_count() == s.vehicle_count());
  for (int i = 0; i < a.agent_count(); ++i) {
    CHECK(a.vehicles()[i].x == b.vehicles()[i].x);
    CHECK(a.vehicles()[i].speed == b.vehicles()[i].speed);
    CHECK(a.vehicles()[i].peer == b.vehicles()[i].peer);
    for (int m = 0; m < kModeCount; ++m) {
      CHECK(oa[i].sinr_prev[m] == 0.0);  // no previous step yet
      CHECK(oa[i].remaining_bits[m] == s.load_bits);
    }
  }

  ScenarioConfig dense = s;
  dense.density_per_km2 = 16.95;
  Env c(dense, link, 1);
  c.reset(1);
  CHECK(c.agent_count() == 17);
}

TEST_CASE("a lone satellite transmitter sees zero interference and full capacity") {
  ScenarioConfig s = small_scenario();
  LinkBudgetConfig link;
  Env env(s, link, 7);
  env.reset(42);
  const ActionSpace& space = env.action_space();

  std::vector<Action> actions(4);
  actions[0] = sat_action(space, 0);
  // everyone else on distinct terrestrial channels, away from agent 0
  actions[1] = {Mode::kV2I, 0, 0};
  actions[2] = {Mode::kV2I, 1, 0};
  actions[3] = {Mode::kV2V, 0, 0};

  const StepResult res = env.step(actions);
  const double p = dbm_to_mw(33.5);
  const double g = satellite_gain(link, link.slant_range_m());
  const double n0 = noise_power_mw(s.satellite_bandwidth_hz, link.noise_figure_sat_db,
                                   link.noise_psd_dbm_hz);
  const double expect = capacity_bps(s.satellite_bandwidth_hz, p, g, n0, 0.0);
  CHECK(res.capacity_bps[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(res.records[0].sinr == doctest::Approx(p * g / n0).epsilon(1e-12));
}

TEST_CASE("satellite contention grants the lower id and logs the loss") {
  ScenarioConfig s = small_scenario();
  LinkBudgetConfig link;
  Env env(s, link, 7);
  env.reset(42);
  const ActionSpace& space = env.action_space();

  std::vector<Action> actions(4, sat_action(space, 1));
  const StepResult res = env.step(actions);
  CHECK(res.capacity_bps[0] > 0.0);
  CHECK(res.capacity_bps[1] == 0.0);
  CHECK(res.capacity_bps[2] == 0.0);
  CHECK(res.capacity_bps[3] == 0.0);
  CHECK(env.contention_loss_count() == 3);

  // at most one agent per satellite subchannel is ever granted capacity
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Action> acts(4);
    for (auto& a : acts) a = sat_action(space, static_cast<int>(rng() % 2));
    const StepResult r = env.step(acts);
    for (int k = 0; k < space.satellite_channels; ++k) {
      int granted = 0;
      for (int i = 0; i < 4; ++i)
        if (acts[i].subchannel == space.terrestrial_channels + k && r.capacity_bps[i] > 0.0)
          ++granted;
      CHECK(granted <= 1);
    }
  }
}

TEST_CASE("invalid mode/subchannel pairings transmit nothing and are logged") {
  ScenarioConfig s = small_scenario();
  LinkBudgetConfig link;
  Env env(s, link, 7);
  env.reset(42);
  const ActionSpace& space = env.action_space();

  std::vector<Action> actions(4);
  actions[0] = {Mode::kV2S, 0, 0};                            // terrestrial k with SAT
  actions[1] = {Mode::kV2I, space.terrestrial_channels, 0};   // satellite k with V2I
  actions[2] = {Mode::kV2V, 0, 7};                            // power index out of range
  actions[3] = {Mode::kV2I, 0, 0};                            // valid
  const StepResult res = env.step(actions);
  CHECK(res.capacity_bps[0] == 0.0);
  CHECK(res.capacity_bps[1] == 0.0);
  CHECK(res.capacity_bps[2] == 0.0);
  CHECK(res.capacity_bps[3] > 0.0);
  CHECK(env.violation_count() == 3);

  // the null transmission leaves the full backlog penalty
  CHECK(res.rewards[0] == doctest::Approx(-s.penalty_weight));
}

TEST_CASE("terrestrial co-channel interference matches the brute-force double loop") {
  ScenarioConfig s = small_scenario();
  s.density_per_km2 = 6.0;
  LinkBudgetConfig link;
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    Env env(s, link, 1000 + trial);
    env.reset(rng());
    const int n = env.agent_count();
    const ActionSpace& space = env.action_space();
    std::vector<Action> actions(n);
    for (int i = 0; i < n; ++i) {
      const Mode m = rng() % 2 == 0 ? Mode::kV2I : Mode::kV2V;
      actions[i] = {m, static_cast<int>(rng() % space.terrestrial_channels),
                    static_cast<int>(rng() % space.power_levels(m))};
    }
    const StepResult res = env.step(actions);

    // reconstruct each capacity from first principles
    for (int i = 0; i < n; ++i) {
      const double sinr = res.records[i].sinr;
      const double cap = res.capacity_bps[i];
      CHECK(cap == doctest::Approx(s.terrestrial_bandwidth_hz * std::log2(1.0 + sinr))
                       .epsilon(1e-12));
    }
  }
}

TEST_CASE("a co-channel transmitter strictly lowers the victim's SINR") {
  ScenarioConfig s = small_scenario();
  LinkBudgetConfig link;
  // same seed twice: identical geometry and fading, different channel plans
  auto run_step = [&](int other_chan) {
    Env env(s, link, 77);
    env.reset(99);
    std::vector<Action> actions(4);
    actions[0] = {Mode::kV2I, 0, 0};
    actions[1] = {Mode::kV2I, other_chan, 0};
    actions[2] = {Mode::kV2S, 2, 0};
    actions[3] = {Mode::kV2S, 3, 0};
    return env.step(actions);
  };
  const StepResult clean = run_step(1);
  const StepResult jammed = run_step(0);
  CHECK(jammed.records[0].sinr < clean.records[0].sinr);
  CHECK(jammed.capacity_bps[0] < clean.capacity_bps[0]);
  // the out-of-band satellite links are untouched by the channel plan
  CHECK(jammed.records[2].sinr == clean.records[2].sinr);
}

TEST_CASE("delivery accounting: monotone delivered, single pulse, completion reward") {
  ScenarioConfig s = small_scenario();
  s.load_bits = 2e4;  // small enough to complete quickly
  LinkBudgetConfig link;
  Env env(s, link, 3);
  env.reset(9);
  const ActionSpace& space = env.action_space();

  std::vector<int> pulses(4, 0);
  double prev_delivered[4] = {0, 0, 0, 0};
  for (int t = 0; t < s.steps_per_episode; ++t) {
    std::vector<Action> actions(4);
    for (int i = 0; i < 4; ++i) actions[i] = sat_action(space, i % 2, 0);
    // ids 0 and 1 win their dedicated channels every slot
    const StepResult res = env.step(actions);
    for (int i = 0; i < 4; ++i) {
      CHECK(env.vehicles()[i].delivered_bits >= prev_delivered[i]);
      prev_delivered[i] = env.vehicles()[i].delivered_bits;
      pulses[i] += res.utility_pulse[i];
      if (res.utility_pulse[i]) CHECK(res.rewards[i] == doctest::Approx(1.0));
    }
    // global reward is the arithmetic mean
    const double mean = std::accumulate(res.rewards.begin(), res.rewards.end(), 0.0) / 4.0;
    CHECK(res.global_reward == doctest::Approx(mean).epsilon(1e-12));
    if (res.done) break;
  }
  CHECK(pulses[0] == 1);
  CHECK(pulses[1] == 1);
  CHECK(pulses[2] == 0);  // always lose the contention
  CHECK(pulses[3] == 0);
}

TEST_CASE("neighbor views: sharing extremes and empirical rate") {
  ScenarioConfig s = small_scenario();
  s.density_per_km2 = 12.0;
  s.neighbor_radius_m = 2000.0;  // everyone hears everyone
  LinkBudgetConfig link;
  Env env(s, link, 4);
  env.reset(11);
  const int n = env.agent_count();

  Rng rng(17);
  const auto all = env.neighbor_views(1.0, rng);
  for (int i = 0; i < n; ++i) {
    CHECK(all[i].size() == static_cast<std::size_t>(n));  // self + every neighbor
    CHECK(all[i][0].first == i);
  }
  const auto none = env.neighbor_views(0.0, rng);
  for (int i = 0; i < n; ++i) {
    REQUIRE(none[i].size() == 1);
    CHECK(none[i][0].first == i);
  }

  long delivered = 0, edges = 0;
  while (edges < 100000) {
    const auto views = env.neighbor_views(0.4, rng);
    for (int i = 0; i < n; ++i) {
      delivered += static_cast<long>(views[i].size()) - 1;
      edges += n - 1;
    }
  }
  CHECK(static_cast<double>(delivered) / edges == doctest::Approx(0.4).epsilon(0.05));

  CHECK_THROWS_AS(env.neighbor_views(1.5, rng), std::invalid_argument);
}

TEST_CASE("per-receiver-class path-loss overrides bite the right links") {
  ScenarioConfig s = small_scenario();
  LinkBudgetConfig link;
  link.shadowing_sigma_db = 0.0;
  auto step_sinrs = [&](const LinkBudgetConfig& l) {
    Env env(s, l, 55);
    env.reset(66);
    std::vector<Action> actions(4);
    actions[0] = {Mode::kV2I, 0, 0};
    actions[1] = {Mode::kV2V, 1, 0};
    actions[2] = {Mode::kV2S, 2, 0};
    actions[3] = {Mode::kV2S, 3, 0};
    return env.step(actions);
  };
  const StepResult base = step_sinrs(link);
  LinkBudgetConfig steeper = link;
  steeper.pathloss_exponent_v2v = 3.5;  // vehicles only
  const StepResult changed = step_sinrs(steeper);
  CHECK(changed.records[0].sinr == base.records[0].sinr);  // RSU link untouched
  CHECK(changed.records[1].sinr != base.records[1].sinr);
  CHECK(changed.records[2].sinr == base.records[2].sinr);  // satellite untouched
}

TEST_CASE("subchannel pool: contiguous ids, per-band counts and bandwidths") {
  ScenarioConfig s = small_scenario();
  s.terrestrial_subchannels = 3;
  s.satellite_subchannels = 5;
  const auto pool = build_subchannel_pool(s);
  REQUIRE(pool.size() == 8);
  int terrestrial = 0, satellite = 0;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    CHECK(pool[k].id == static_cast<int>(k));
    if (pool[k].band == Band::kTerrestrialS) {
      ++terrestrial;
      CHECK(pool[k].bandwidth_hz == s.terrestrial_bandwidth_hz);
    } else {
      ++satellite;
      CHECK(pool[k].bandwidth_hz == s.satellite_bandwidth_hz);
    }
  }
  CHECK(terrestrial == 3);
  CHECK(satellite == 5);
  // the shared band comes first, matching the action space's global indexing
  for (int k = 0; k < 3; ++k) CHECK(pool[k].band == Band::kTerrestrialS);

  LinkBudgetConfig link;
  Env env(s, link, 1);
  CHECK(env.subchannels().size() == 8);
}

TEST_CASE("comm graph respects the radius and orders by distance") {
  ScenarioConfig s = small_scenario();
  s.density_per_km2 = 10.0;
  LinkBudgetConfig link;
  Env env(s, link, 21);
  env.reset(5);
  const CommGraph g = env.comm_graph();
  const auto& vs = env.vehicles();
  const double r2 = s.neighbor_radius_m * s.neighbor_radius_m;
  for (int i = 0; i < env.agent_count(); ++i) {
    double prev = -1.0;
    for (int j : g.neighbors[i]) {
      const double dx = vs[i].x - vs[j].x, dy = vs[i].y - vs[j].y;
      const double d2 = dx * dx + dy * dy;
      CHECK(d2 <= r2);
      CHECK(d2 >= prev);
      prev = d2;
    }
  }
}

TEST_CASE("null transmissions pin the reward at minus w") {
  ScenarioConfig s = small_scenario();
  LinkBudgetConfig link;
  Env env(s, link, 2);
  env.reset(1);
  // invalid pairing everywhere: nobody transmits anything all episode
  std::vector<Action> invalid(4, Action{Mode::kV2S, 0, 0});
  for (int t = 0; t < s.steps_per_episode; ++t) {
    const StepResult res = env.step(invalid);
    for (int i = 0; i < 4; ++i) {
      CHECK(res.rewards[i] == doctest::Approx(-s.penalty_weight));
      CHECK(res.utility_pulse[i] == 0);
    }
    if (res.done) CHECK(t == s.steps_per_episode - 1);
  }
  for (const auto& v : env.vehicles()) CHECK_FALSE(v.completed);
}
