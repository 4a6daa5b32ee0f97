#include <doctest.h>

#include <map>

#include "satv2x/baselines.hpp"

using namespace satv2x;

namespace {

ActionSpace two_by_two() {
  ActionSpace space;
  space.terrestrial_channels = 2;
  space.satellite_channels = 2;
  space.power_dbm[static_cast<int>(Mode::kV2I)] = {23.0};
  space.power_dbm[static_cast<int>(Mode::kV2S)] = {33.5};
  space.power_dbm[static_cast<int>(Mode::kV2V)] = {23.0, 10.0, 15.0, 17.0};
  return space;
}

}  // namespace

TEST_CASE("variant tags resolve to the right toggles") {
  const VariantToggles full = parse_variant("FULL");
  CHECK(full.fingerprint);
  CHECK(full.sil);
  CHECK(full.attention);
  CHECK(full.learning);

  const VariantToggles nf = parse_variant("NF");
  CHECK_FALSE(nf.fingerprint);
  CHECK(nf.sil);
  CHECK(nf.attention);

  const VariantToggles nosil = parse_variant("NO_SIL");
  CHECK(nosil.fingerprint);
  CHECK_FALSE(nosil.sil);
  CHECK(nosil.attention);

  const VariantToggles nomha = parse_variant("NO_MHA");
  CHECK(nomha.fingerprint);
  CHECK(nomha.sil);
  CHECK_FALSE(nomha.attention);

  const VariantToggles maac = parse_variant("MAAC");
  CHECK_FALSE(maac.fingerprint);
  CHECK_FALSE(maac.sil);
  CHECK_FALSE(maac.attention);
  CHECK(maac.learning);

  CHECK_FALSE(parse_variant("RANDOM").learning);
  CHECK_FALSE(parse_variant("GREEDY_SINR").learning);
  CHECK_THROWS_AS(parse_variant("WAT"), ConfigError);
}

TEST_CASE("random policy is uniform over feasible triples") {
  // 2 modes x 2 channels x 1 power when V2V carries one power level too
  ActionSpace space;
  space.terrestrial_channels = 2;
  space.satellite_channels = 2;
  space.power_dbm[static_cast<int>(Mode::kV2I)] = {23.0};
  space.power_dbm[static_cast<int>(Mode::kV2S)] = {33.5};
  space.power_dbm[static_cast<int>(Mode::kV2V)] = {23.0};
  CHECK(space.feasible_triples() == 6);

  Rng rng(12);
  std::map<std::tuple<int, int, int>, long> counts;
  const int draws = 120000;
  for (int i = 0; i < draws; ++i) {
    const Action a = random_policy(space, rng);
    CHECK(space.feasible(a.mode, a.subchannel));  // infeasible pairings never drawn
    ++counts[{static_cast<int>(a.mode), a.subchannel, a.power_level}];
  }
  CHECK(counts.size() == 6);
  for (const auto& [key, c] : counts)
    CHECK(static_cast<double>(c) / draws == doctest::Approx(1.0 / 6.0).epsilon(0.06));

  // seeded determinism
  Rng r1(55), r2(55);
  for (int i = 0; i < 100; ++i) {
    const Action a = random_policy(two_by_two(), r1);
    const Action b = random_policy(two_by_two(), r2);
    CHECK(a.mode == b.mode);
    CHECK(a.subchannel == b.subchannel);
    CHECK(a.power_level == b.power_level);
  }
}

TEST_CASE("greedy picks the strongest remembered mode at maximum power") {
  const ActionSpace space = two_by_two();
  Rng rng(9);

  Observation obs;
  obs.load_bits = 1.0;
  obs.sinr_prev = {1.0, 50.0, 3.0};
  Action a = greedy_sinr_policy(space, obs, rng);
  CHECK(a.mode == Mode::kV2S);
  CHECK(space.is_satellite_channel(a.subchannel));
  CHECK(space.power_dbm[static_cast<int>(Mode::kV2S)][a.power_level] == 33.5);

  // V2V wins: maximum of the four-level set is 23 dBm at index 0
  obs.sinr_prev = {1.0, 2.0, 90.0};
  a = greedy_sinr_policy(space, obs, rng);
  CHECK(a.mode == Mode::kV2V);
  CHECK(space.power_dbm[static_cast<int>(Mode::kV2V)][a.power_level] == 23.0);

  // ties and the all-zero cold start fall back to V2I
  obs.sinr_prev = {5.0, 5.0, 5.0};
  CHECK(greedy_sinr_policy(space, obs, rng).mode == Mode::kV2I);
  obs.sinr_prev = {0.0, 0.0, 0.0};
  CHECK(greedy_sinr_policy(space, obs, rng).mode == Mode::kV2I);
}

TEST_CASE("build_variant wires learners and rejects reference policies") {
  RunConfig cfg;
  cfg.scenario.density_per_km2 = 3.0;
  cfg.scenario.terrestrial_subchannels = 2;
  cfg.scenario.satellite_subchannels = 2;
  cfg.learner.episodes = 1;
  cfg.learner.gru_hidden = 4;
  cfg.learner.attention_dim = 4;
  cfg.learner.heads = 2;
  cfg.learner.actor_hidden = 6;
  cfg.learner.critic_hidden = 6;
  cfg.learner.est_hidden = 4;
  cfg.learner.est_max_neighbors = 2;

  auto full = build_variant("FULL", cfg, 1);
  auto maac = build_variant("MAAC", cfg, 1);
  CHECK(full->model().enhanced_dim() == 4 + 4 + 2);
  CHECK(maac->model().enhanced_dim() == 4 + 4);  // mean pool width, no fingerprint
  CHECK_THROWS_AS(build_variant("RANDOM", cfg, 1), ConfigError);
  CHECK_THROWS_AS(build_variant("NOPE", cfg, 1), ConfigError);
}

TEST_CASE("mean-pool context is permutation invariant") {
  LearnerSection lc;
  lc.gru_hidden = 6;
  lc.attention_dim = 6;
  lc.heads = 2;
  lc.actor_hidden = 8;
  lc.critic_hidden = 8;
  lc.est_hidden = 6;
  lc.est_max_neighbors = 2;
  PolicyModel pool(lc, two_by_two(), parse_variant("NO_MHA"), 3);

  nn::Rng rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<nn::Tensor> neigh(4);
  for (auto& t : neigh) {
    t = nn::Tensor::zeros({lc.gru_hidden});
    for (double& v : t.data) v = u(rng);
  }
  nn::Tensor q = nn::Tensor::zeros({lc.gru_hidden});

  nn::Tape t1, t2;
  std::vector<nn::Var> fwd, rev;
  for (const auto& t : neigh) fwd.push_back(t1.input(t));
  for (auto it = neigh.rbegin(); it != neigh.rend(); ++it) rev.push_back(t2.input(*it));
  const auto c1 = pool.context(t1, t1.input(q), fwd, false, nullptr);
  const auto c2 = pool.context(t2, t2.input(q), rev, false, nullptr);
  for (int i = 0; i < lc.gru_hidden; ++i)
    CHECK(t1.value(c1.context)[i] == doctest::Approx(t2.value(c2.context)[i]).epsilon(1e-12));
}

TEST_CASE("toggled-off components leave shared trajectories identical until they bite") {
  // FULL and NO_SIL share every code path until the first SIL update, which
  // only happens once the buffer holds a full batch; with sil_samples larger
  // than an entire run's transitions, both trainers stay identical.
  RunConfig cfg;
  cfg.scenario.density_per_km2 = 3.0;
  cfg.scenario.terrestrial_subchannels = 2;
  cfg.scenario.satellite_subchannels = 2;
  cfg.scenario.steps_per_episode = 10;
  cfg.scenario.load_bits = 1e5;
  cfg.learner.episodes = 2;
  cfg.learner.minibatch = 8;
  cfg.learner.gru_hidden = 4;
  cfg.learner.attention_dim = 4;
  cfg.learner.heads = 2;
  cfg.learner.actor_hidden = 6;
  cfg.learner.critic_hidden = 6;
  cfg.learner.est_hidden = 4;
  cfg.learner.est_max_neighbors = 2;
  cfg.learner.metrics_window = 2;
  cfg.learner.sil_samples = 1000;  // never reached in 60 transitions

  Trainer full(cfg, parse_variant("FULL"), 42);
  Trainer nosil(cfg, parse_variant("NO_SIL"), 42);
  const TrainOutcome a = full.run();
  const TrainOutcome b = nosil.run();
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    CHECK(a.series[i].mean_reward == b.series[i].mean_reward);
    CHECK(a.series[i].actor_loss == b.series[i].actor_loss);
  }
}
