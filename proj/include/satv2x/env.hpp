#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "satv2x/channel.hpp"
#include "satv2x/config.hpp"

namespace satv2x {

using Rng = std::mt19937_64;

// Communication targets, in fixed index order. V2I is the tie-break and
// cold-start default everywhere.
enum class Mode : int { kV2I = 0, kV2S = 1, kV2V = 2 };
constexpr int kModeCount = 3;
const char* mode_name(Mode m);

struct Action {
  Mode mode = Mode::kV2I;
  int subchannel = 0;   // global index into the combined pool
  int power_level = 0;  // index into the mode's discrete power set
};

// Discrete action structure shared by the learner and the baselines.
// Global subchannel indices: [0, terrestrial) are shared terrestrial,
// [terrestrial, terrestrial+satellite) are dedicated satellite.
struct ActionSpace {
  int terrestrial_channels = 0;
  int satellite_channels = 0;
  std::array<std::vector<double>, kModeCount> power_dbm;  // by Mode index

  int total_channels() const { return terrestrial_channels + satellite_channels; }
  bool is_satellite_channel(int k) const { return k >= terrestrial_channels; }
  bool feasible(Mode m, int k) const {
    if (k < 0 || k >= total_channels()) return false;
    return (m == Mode::kV2S) == is_satellite_channel(k);
  }
  int power_levels(Mode m) const {
    return static_cast<int>(power_dbm[static_cast<int>(m)].size());
  }
  int max_power_levels() const {
    int n = 0;
    for (const auto& p : power_dbm) n = std::max(n, static_cast<int>(p.size()));
    return n;
  }
  // 0 for feasible entries, a large negative for infeasible; added to logits.
  std::vector<double> channel_mask(Mode m) const;
  std::vector<double> power_mask(Mode m) const;
  long feasible_triples() const;
};

struct Observation {
  std::array<double, kModeCount> sinr_prev{};       // linear, previous step
  std::array<double, kModeCount> remaining_bits{};  // per-mode milestone backlog
  double load_bits = 0.0;                           // scalar episode requirement
};

struct VehicleState {
  int id = 0;
  double x = 0.0, y = 0.0;
  double speed = 0.0;
  double heading_x = 1.0;  // +-1 along the road axis
  int lane = 0;
  int peer = -1;           // fixed V2V destination for the episode
  int nearest_rsu = 0;
  std::array<double, kModeCount> mode_load_bits{};
  double load_bits = 0.0;
  double delivered_bits = 0.0;
  bool completed = false;
};

struct StepRecord {
  int t = 0;
  int agent = 0;
  Mode mode = Mode::kV2I;
  int subchannel = 0;
  double power_dbm = 0.0;
  double sinr = 0.0;
  double capacity_bps = 0.0;
  double reward = 0.0;
};

struct StepResult {
  std::vector<double> rewards;
  double global_reward = 0.0;
  std::vector<int> utility_pulse;
  std::vector<double> capacity_bps;
  bool done = false;
  std::vector<StepRecord> records;
};

struct CommGraph {
  std::vector<std::vector<int>> neighbors;  // sorted by distance, nearest first
};

// Reward of one agent for one slot: completion pulse minus the weighted
// normalized backlog.
double reward_value(int utility_pulse, double remaining_bits, double load_bits, double w);

// 1 iff the cumulative delivery crossed the requirement this slot.
int utility_pulse(double delivered, double delivered_prev, double load_bits);

// Straight-road kinematics with wraparound on the segment.
void advance_vehicles(std::vector<VehicleState>& vehicles, double dt_s, double area_x_m);

// Combined pool: shared terrestrial subchannels first, dedicated satellite
// subchannels after, with contiguous global ids.
std::vector<Subchannel> build_subchannel_pool(const ScenarioConfig& scenario);

// The POMDP world. One instance is single-threaded; independent instances
// may run in parallel with their own seeds.
class Env {
 public:
  Env(const ScenarioConfig& scenario, const LinkBudgetConfig& link, std::uint64_t seed);

  // Starts a fresh episode; deterministic in episode_seed.
  std::vector<Observation> reset(std::uint64_t episode_seed);
  StepResult step(std::span<const Action> actions);

  const std::vector<Observation>& observations() const { return observations_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  const ActionSpace& action_space() const { return space_; }
  const std::vector<Subchannel>& subchannels() const { return pool_; }
  int agent_count() const { return scenario_.vehicle_count(); }
  int time_index() const { return t_; }
  int episode_length() const { return scenario_.steps_per_episode; }

  CommGraph comm_graph() const;
  // Per-agent shared observation lists; entry 0 is always the agent itself,
  // each neighbor edge is delivered independently with probability sharing.
  std::vector<std::vector<std::pair<int, Observation>>> neighbor_views(double sharing,
                                                                       Rng& rng) const;

  long violation_count() const { return violations_; }
  long contention_loss_count() const { return contention_losses_; }

 private:
  struct LinkEnd {
    bool satellite = false;
    int rx_node = -1;  // vehicles [0, I), RSUs [I, I+R)
  };

  int rx_node_count() const { return agent_count() + static_cast<int>(rsu_x_.size()); }
  LinkEnd link_end(int agent, Mode mode) const;
  double node_gain(int tx_agent, int rx_node) const;  // terrestrial, with antennas
  double mode_gain(int agent, Mode mode) const;
  double noise_for(Mode mode) const;
  double min_power_mw(Mode mode) const;
  void redraw_fast_fading();
  void refresh_nearest_rsu();
  void build_observations(const std::vector<std::array<double, kModeCount>>& sinr);

  ScenarioConfig scenario_;
  LinkBudgetConfig link_;
  ActionSpace space_;
  std::vector<Subchannel> pool_;
  Rng rng_;

  std::vector<VehicleState> vehicles_;
  std::vector<double> rsu_x_, rsu_y_;
  // fading by [tx agent][rx node]; satellite links carry no fading draw
  std::vector<std::vector<double>> fast_;
  std::vector<std::vector<double>> shadow_;
  std::vector<Observation> observations_;
  double sat_gain_ = 0.0;
  int t_ = 0;
  long violations_ = 0;
  long contention_losses_ = 0;
};

}  // namespace satv2x
