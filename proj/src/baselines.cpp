#include "satv2x/baselines.hpp"

#include <algorithm>

namespace satv2x {

VariantToggles parse_variant(const std::string& tag) {
  VariantToggles t;
  if (tag == "FULL") return t;
  if (tag == "NF") {
    t.fingerprint = false;
    return t;
  }
  if (tag == "NO_SIL") {
    t.sil = false;
    return t;
  }
  if (tag == "NO_MHA") {
    t.attention = false;
    return t;
  }
  if (tag == "MAAC") {  // attention, fingerprint and SIL all off
    t.fingerprint = false;
    t.sil = false;
    t.attention = false;
    return t;
  }
  if (tag == "RANDOM" || tag == "GREEDY_SINR") {
    t.learning = false;
    t.sil = false;
    return t;
  }
  throw ConfigError("unknown variant '" + tag + "'");
}

Action random_policy(const ActionSpace& space, Rng& rng) {
  const long total = space.feasible_triples();
  if (total <= 0) throw std::invalid_argument("random_policy: empty feasible set");
  std::uniform_int_distribution<long> pick(0, total - 1);
  long r = pick(rng);
  for (int m = 0; m < kModeCount; ++m) {
    const Mode mode = static_cast<Mode>(m);
    const int chans = mode == Mode::kV2S ? space.satellite_channels : space.terrestrial_channels;
    const long block = static_cast<long>(chans) * space.power_levels(mode);
    if (r < block) {
      Action a;
      a.mode = mode;
      const int chan_local = static_cast<int>(r / space.power_levels(mode));
      a.subchannel = mode == Mode::kV2S ? space.terrestrial_channels + chan_local : chan_local;
      a.power_level = static_cast<int>(r % space.power_levels(mode));
      return a;
    }
    r -= block;
  }
  throw std::logic_error("random_policy: enumeration out of range");
}

Action greedy_sinr_policy(const ActionSpace& space, const Observation& obs, Rng& rng) {
  Mode best = Mode::kV2I;  // cold-start default, also the tie-break
  double best_sinr = obs.sinr_prev[static_cast<std::size_t>(Mode::kV2I)];
  for (int m = 1; m < kModeCount; ++m) {
    if (obs.sinr_prev[static_cast<std::size_t>(m)] > best_sinr) {
      best_sinr = obs.sinr_prev[static_cast<std::size_t>(m)];
      best = static_cast<Mode>(m);
    }
  }
  Action a;
  a.mode = best;
  if (best == Mode::kV2S) {
    std::uniform_int_distribution<int> pick(0, space.satellite_channels - 1);
    a.subchannel = space.terrestrial_channels + pick(rng);
  } else {
    std::uniform_int_distribution<int> pick(0, space.terrestrial_channels - 1);
    a.subchannel = pick(rng);
  }
  const auto& powers = space.power_dbm[static_cast<int>(best)];
  a.power_level = static_cast<int>(
      std::max_element(powers.begin(), powers.end()) - powers.begin());
  return a;
}

std::unique_ptr<Trainer> build_variant(const std::string& tag, const RunConfig& cfg,
                                       std::uint64_t seed) {
  const VariantToggles toggles = parse_variant(tag);
  if (!toggles.learning)
    throw ConfigError("variant '" + tag + "' is a reference policy, not a learner");
  return std::make_unique<Trainer>(cfg, toggles, seed);
}

}  // namespace satv2x
