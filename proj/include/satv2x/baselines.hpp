#pragma once

#include <string>

#include "satv2x/agent.hpp"

namespace satv2x {

// Maps a variant tag onto component toggles. FULL has everything on;
// NF drops the fingerprint, NO_SIL the self-imitation pass, NO_MHA swaps
// attention for an unweighted mean pool, MAAC drops all three. RANDOM and
// GREEDY_SINR are the non-learning reference policies.
VariantToggles parse_variant(const std::string& tag);

// Uniform over the feasible (mode, subchannel, power) triples.
Action random_policy(const ActionSpace& space, Rng& rng);

// Picks the mode with the best previous-step SINR (ties and cold start fall
// back to V2I), a random feasible subchannel in it, and maximum power.
Action greedy_sinr_policy(const ActionSpace& space, const Observation& obs, Rng& rng);

// Configured learner for an ablation tag; RANDOM/GREEDY_SINR are rejected
// here because they have no trainer.
std::unique_ptr<Trainer> build_variant(const std::string& tag, const RunConfig& cfg,
                                       std::uint64_t seed);

}  // namespace satv2x
