#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "satv2x/channel.hpp"

namespace satv2x {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  double area_x_m = 1000.0;
  double area_y_m = 1000.0;
  double density_per_km2 = 16.95;  // vehicle count = round(density * area_km2)
  int rsu_count = 4;
  int lanes = 4;
  int steps_per_episode = 100;     // T
  double slot_s = 0.001;           // time step
  double penalty_weight = 0.1;     // w in the reward
  double neighbor_radius_m = 300.0;
  double speed_min_mps = 6.21;
  double speed_max_mps = 13.07;
  int terrestrial_subchannels = 10;
  double terrestrial_bandwidth_hz = 1e6;
  int satellite_subchannels = 20;
  double satellite_bandwidth_hz = 20e6;
  std::vector<double> power_dbm_v2i = {23.0};
  std::vector<double> power_dbm_v2s = {33.5};
  std::vector<double> power_dbm_v2v = {23.0, 10.0, 15.0, 17.0};
  // Episode delivery requirement per vehicle, in bits. The default is the
  // 260-byte sidelink message repeated every 3 ms across the 100 ms episode.
  double load_bits = 68640.0;
  // Per-mode observation milestones; 0 means "same as load_bits".
  double load_bits_v2i = 0.0;
  double load_bits_v2s = 0.0;
  double load_bits_v2v = 0.0;
  bool hypothetical_sinr = true;   // unused modes observe min-power SINR estimates

  int vehicle_count() const;
  void validate() const;
};

struct LearnerSection {
  std::string variant = "FULL";
  double sharing_level = 1.0;
  int episodes = 600;
  int minibatch = 64;
  double discount = 0.92;
  double actor_lr = 0.0001;
  double critic_lr = 0.009;
  double estimator_lr = 0.001;
  double entropy_coeff = 0.058;
  int actor_hidden = 256;
  int critic_hidden = 224;
  int attention_dim = 64;
  int gru_hidden = 128;
  int heads = 4;
  double dropout = 0.2;
  double lambda_est = 0.5;
  int est_hidden = 128;
  int est_max_neighbors = 8;
  int replay_capacity = 20000;
  int sil_samples = 64;            // M
  int sil_updates_per_episode = 1;
  double priority_floor = 1e-6;
  int metrics_window = 50;         // final-window length for summaries

  void validate() const;
};

struct RunSection {
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};  // multi-seed commands
  std::string out_dir = "out";
  bool trace = false;
  int workers = 0;  // 0 = one per core, capped by the number of runs

  void validate() const;
};

struct RunConfig {
  ScenarioConfig scenario;
  LinkBudgetConfig link;
  LearnerSection learner;
  RunSection run;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string serialize() const;  // canonical form; parse(serialize(c)) == c
  void validate() const;
  std::uint64_t hash() const;     // FNV-1a over the canonical form
};

std::string hash_hex(std::uint64_t h);

}  // namespace satv2x
