#include "satv2x/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace satv2x {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kV2I: return "V2I";
    case Mode::kV2S: return "V2S";
    case Mode::kV2V: return "V2V";
  }
  return "?";
}

namespace {
constexpr double kMaskPenalty = -1e9;
}

std::vector<double> ActionSpace::channel_mask(Mode m) const {
  std::vector<double> mask(static_cast<std::size_t>(total_channels()), 0.0);
  for (int k = 0; k < total_channels(); ++k)
    if (!feasible(m, k)) mask[static_cast<std::size_t>(k)] = kMaskPenalty;
  return mask;
}

std::vector<double> ActionSpace::power_mask(Mode m) const {
  std::vector<double> mask(static_cast<std::size_t>(max_power_levels()), 0.0);
  for (int p = power_levels(m); p < max_power_levels(); ++p)
    mask[static_cast<std::size_t>(p)] = kMaskPenalty;
  return mask;
}

long ActionSpace::feasible_triples() const {
  long n = 0;
  n += static_cast<long>(terrestrial_channels) * power_levels(Mode::kV2I);
  n += static_cast<long>(satellite_channels) * power_levels(Mode::kV2S);
  n += static_cast<long>(terrestrial_channels) * power_levels(Mode::kV2V);
  return n;
}

double reward_value(int pulse, double remaining_bits, double load_bits, double w) {
  if (!(load_bits > 0.0)) throw std::domain_error("reward: load must be > 0");
  return static_cast<double>(pulse) - w * remaining_bits / load_bits;
}

int utility_pulse(double delivered, double delivered_prev, double load_bits) {
  if (delivered < delivered_prev) throw std::domain_error("utility_pulse: delivery decreased");
  return (delivered >= load_bits && load_bits > delivered_prev) ? 1 : 0;
}

std::vector<Subchannel> build_subchannel_pool(const ScenarioConfig& scenario) {
  std::vector<Subchannel> pool;
  pool.reserve(static_cast<std::size_t>(scenario.terrestrial_subchannels +
                                        scenario.satellite_subchannels));
  int id = 0;
  for (int k = 0; k < scenario.terrestrial_subchannels; ++k)
    pool.push_back({id++, Band::kTerrestrialS, scenario.terrestrial_bandwidth_hz});
  for (int k = 0; k < scenario.satellite_subchannels; ++k)
    pool.push_back({id++, Band::kSatelliteKa, scenario.satellite_bandwidth_hz});
  return pool;
}

void advance_vehicles(std::vector<VehicleState>& vehicles, double dt_s, double area_x_m) {
  if (!(dt_s > 0.0)) throw std::domain_error("advance_vehicles: dt must be > 0");
  for (VehicleState& v : vehicles) {
    v.x += v.speed * v.heading_x * dt_s;
    v.x = std::fmod(v.x, area_x_m);
    if (v.x < 0.0) v.x += area_x_m;
  }
}

Env::Env(const ScenarioConfig& scenario, const LinkBudgetConfig& link, std::uint64_t seed)
    : scenario_(scenario), link_(link), rng_(seed) {
  scenario_.validate();
  link_.validate();
  space_.terrestrial_channels = scenario_.terrestrial_subchannels;
  space_.satellite_channels = scenario_.satellite_subchannels;
  space_.power_dbm[static_cast<int>(Mode::kV2I)] = scenario_.power_dbm_v2i;
  space_.power_dbm[static_cast<int>(Mode::kV2S)] = scenario_.power_dbm_v2s;
  space_.power_dbm[static_cast<int>(Mode::kV2V)] = scenario_.power_dbm_v2v;
  pool_ = build_subchannel_pool(scenario_);
  sat_gain_ = satellite_gain(link_, link_.slant_range_m());

  // RSUs on a uniform lattice covering the area
  const int n = scenario_.rsu_count;
  int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  int rows = (n + cols - 1) / cols;
  for (int i = 0; i < n; ++i) {
    const int r = i / cols, c = i % cols;
    rsu_x_.push_back((c + 0.5) * scenario_.area_x_m / cols);
    rsu_y_.push_back((r + 0.5) * scenario_.area_y_m / rows);
  }
}

std::vector<Observation> Env::reset(std::uint64_t episode_seed) {
  rng_.seed(episode_seed);
  t_ = 0;
  const int count = scenario_.vehicle_count();
  vehicles_.assign(static_cast<std::size_t>(count), VehicleState{});

  std::uniform_real_distribution<double> ux(0.0, scenario_.area_x_m);
  std::uniform_real_distribution<double> uspeed(scenario_.speed_min_mps, scenario_.speed_max_mps);
  const double lane_gap = scenario_.area_y_m / (scenario_.lanes + 1);
  for (int i = 0; i < count; ++i) {
    VehicleState& v = vehicles_[static_cast<std::size_t>(i)];
    v.id = i;
    v.lane = i % scenario_.lanes;
    v.x = ux(rng_);
    v.y = lane_gap * (v.lane + 1);
    v.speed = uspeed(rng_);
    v.heading_x = (v.lane % 2 == 0) ? 1.0 : -1.0;
    v.load_bits = scenario_.load_bits;
    auto mode_load = [&](double override_bits) {
      return override_bits > 0.0 ? override_bits : scenario_.load_bits;
    };
    v.mode_load_bits[static_cast<int>(Mode::kV2I)] = mode_load(scenario_.load_bits_v2i);
    v.mode_load_bits[static_cast<int>(Mode::kV2S)] = mode_load(scenario_.load_bits_v2s);
    v.mode_load_bits[static_cast<int>(Mode::kV2V)] = mode_load(scenario_.load_bits_v2v);
    v.delivered_bits = 0.0;
    v.completed = false;
  }

  // fixed V2V peer: nearest other vehicle at reset
  for (int i = 0; i < count; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int peer = -1;
    for (int j = 0; j < count; ++j) {
      if (j == i) continue;
      const double dx = vehicles_[i].x - vehicles_[j].x;
      const double dy = vehicles_[i].y - vehicles_[j].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        peer = j;
      }
    }
    vehicles_[static_cast<std::size_t>(i)].peer = peer;
  }
  refresh_nearest_rsu();

  // shadowing per episode per link, fast fading per step per link
  std::normal_distribution<double> shadow(0.0, link_.shadowing_sigma_db);
  shadow_.assign(static_cast<std::size_t>(count),
                 std::vector<double>(static_cast<std::size_t>(rx_node_count()), 0.0));
  for (auto& row : shadow_)
    for (double& s : row) s = link_.shadowing_sigma_db > 0.0 ? shadow(rng_) : 0.0;
  fast_.assign(static_cast<std::size_t>(count),
               std::vector<double>(static_cast<std::size_t>(rx_node_count()), 1.0));
  redraw_fast_fading();

  observations_.assign(static_cast<std::size_t>(count), Observation{});
  for (int i = 0; i < count; ++i) {
    Observation& o = observations_[static_cast<std::size_t>(i)];
    o.load_bits = vehicles_[static_cast<std::size_t>(i)].load_bits;
    for (int m = 0; m < kModeCount; ++m) {
      o.sinr_prev[static_cast<std::size_t>(m)] = 0.0;  // no previous step yet
      o.remaining_bits[static_cast<std::size_t>(m)] =
          vehicles_[static_cast<std::size_t>(i)].mode_load_bits[static_cast<std::size_t>(m)];
    }
  }
  return observations_;
}

void Env::redraw_fast_fading() {
  std::exponential_distribution<double> expo(1.0);  // unit-mean |h|^2
  for (auto& row : fast_)
    for (double& f : row) f = expo(rng_);
}

void Env::refresh_nearest_rsu() {
  for (VehicleState& v : vehicles_) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rsu_x_.size(); ++r) {
      const double dx = v.x - rsu_x_[r];
      const double dy = v.y - rsu_y_[r];
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        v.nearest_rsu = static_cast<int>(r);
      }
    }
  }
}

Env::LinkEnd Env::link_end(int agent, Mode mode) const {
  const VehicleState& v = vehicles_[static_cast<std::size_t>(agent)];
  switch (mode) {
    case Mode::kV2I: return {false, agent_count() + v.nearest_rsu};
    case Mode::kV2V: return {false, v.peer};
    case Mode::kV2S: return {true, -1};
  }
  return {true, -1};
}

double Env::node_gain(int tx_agent, int rx_node) const {
  const VehicleState& tx = vehicles_[static_cast<std::size_t>(tx_agent)];
  double rx_x, rx_y, height_diff, ant_rx_db, kappa;
  if (rx_node < agent_count()) {
    const VehicleState& rx = vehicles_[static_cast<std::size_t>(rx_node)];
    rx_x = rx.x;
    rx_y = rx.y;
    height_diff = 0.0;
    ant_rx_db = link_.antenna_gain_vehicle_db;
    kappa = link_.kappa_to_vehicle();
  } else {
    const std::size_t r = static_cast<std::size_t>(rx_node - agent_count());
    rx_x = rsu_x_[r];
    rx_y = rsu_y_[r];
    height_diff = link_.antenna_height_bs_m - link_.antenna_height_vehicle_m;
    ant_rx_db = link_.antenna_gain_bs_db;
    kappa = link_.kappa_to_bs();
  }
  const double dx = tx.x - rx_x, dy = tx.y - rx_y;
  // a transceiver is never exactly co-located with its target thanks to the
  // height term and lane offsets; clamp to a minimum separation regardless
  const double d3 = std::max(1.0, std::hypot(std::hypot(dx, dy), height_diff));
  const FadingDraw draw{shadow_[static_cast<std::size_t>(tx_agent)][static_cast<std::size_t>(rx_node)],
                        fast_[static_cast<std::size_t>(tx_agent)][static_cast<std::size_t>(rx_node)]};
  const double antennas = db_to_linear(link_.antenna_gain_vehicle_db + ant_rx_db);
  return terrestrial_gain(d3, kappa, draw) * antennas;
}

double Env::mode_gain(int agent, Mode mode) const {
  if (mode == Mode::kV2S) return sat_gain_;
  return node_gain(agent, link_end(agent, mode).rx_node);
}

double Env::noise_for(Mode mode) const {
  switch (mode) {
    case Mode::kV2I:
      return noise_power_mw(scenario_.terrestrial_bandwidth_hz, link_.noise_figure_bs_db,
                            link_.noise_psd_dbm_hz);
    case Mode::kV2V:
      return noise_power_mw(scenario_.terrestrial_bandwidth_hz, link_.noise_figure_vehicle_db,
                            link_.noise_psd_dbm_hz);
    case Mode::kV2S:
      return noise_power_mw(scenario_.satellite_bandwidth_hz, link_.noise_figure_sat_db,
                            link_.noise_psd_dbm_hz);
  }
  return 0.0;
}

double Env::min_power_mw(Mode mode) const {
  const auto& set = space_.power_dbm[static_cast<int>(mode)];
  return dbm_to_mw(*std::min_element(set.begin(), set.end()));
}

StepResult Env::step(std::span<const Action> actions) {
  const int count = agent_count();
  if (static_cast<int>(actions.size()) != count)
    throw std::invalid_argument("env: need exactly one action per agent");

  StepResult res;
  res.rewards.assign(static_cast<std::size_t>(count), 0.0);
  res.utility_pulse.assign(static_cast<std::size_t>(count), 0);
  res.capacity_bps.assign(static_cast<std::size_t>(count), 0.0);
  res.records.resize(static_cast<std::size_t>(count));

  // validity; invalid pairings transmit nothing but do not crash
  std::vector<bool> active(static_cast<std::size_t>(count), true);
  for (int i = 0; i < count; ++i) {
    const Action& a = actions[static_cast<std::size_t>(i)];
    const bool ok = space_.feasible(a.mode, a.subchannel) && a.power_level >= 0 &&
                    a.power_level < space_.power_levels(a.mode);
    if (!ok) {
      active[static_cast<std::size_t>(i)] = false;
      ++violations_;
    }
  }

  // dedicated satellite subchannels: lowest agent id wins a collision
  std::vector<int> sat_winner(static_cast<std::size_t>(space_.total_channels()), -1);
  for (int i = 0; i < count; ++i) {
    const Action& a = actions[static_cast<std::size_t>(i)];
    if (!active[static_cast<std::size_t>(i)] || a.mode != Mode::kV2S) continue;
    int& w = sat_winner[static_cast<std::size_t>(a.subchannel)];
    if (w == -1) {
      w = i;
    } else {
      ++contention_losses_;  // i > w by iteration order
      active[static_cast<std::size_t>(i)] = false;
    }
  }

  // co-channel interference sources: active terrestrial transmitters
  std::vector<InterferenceSource> sources;
  for (int j = 0; j < count; ++j) {
    const Action& a = actions[static_cast<std::size_t>(j)];
    if (!active[static_cast<std::size_t>(j)] || a.mode == Mode::kV2S) continue;
    InterferenceSource s;
    s.agent = j;
    s.subchannel = a.subchannel;
    s.power_mw = dbm_to_mw(space_.power_dbm[static_cast<int>(a.mode)][static_cast<std::size_t>(a.power_level)]);
    sources.push_back(s);
  }

  std::vector<std::array<double, kModeCount>> sinr_next(
      static_cast<std::size_t>(count), std::array<double, kModeCount>{});

  for (int i = 0; i < count; ++i) {
    VehicleState& v = vehicles_[static_cast<std::size_t>(i)];
    const Action& a = actions[static_cast<std::size_t>(i)];
    double capacity = 0.0;
    double sinr = 0.0;
    if (active[static_cast<std::size_t>(i)]) {
      const double power_mw =
          dbm_to_mw(space_.power_dbm[static_cast<int>(a.mode)][static_cast<std::size_t>(a.power_level)]);
      const double noise = noise_for(a.mode);
      const double bandwidth = pool_[static_cast<std::size_t>(a.subchannel)].bandwidth_hz;
      if (a.mode == Mode::kV2S) {
        // dedicated channel: interference identically zero
        const double interference = 0.0;
        sinr = power_mw * sat_gain_ / noise;
        capacity = capacity_bps(bandwidth, power_mw, sat_gain_, noise, interference);
      } else {
        const LinkEnd end = link_end(i, a.mode);
        // gains from each co-channel transmitter toward this receiver
        std::vector<InterferenceSource> here = sources;
        for (InterferenceSource& s : here)
          if (s.agent != i && s.subchannel == a.subchannel)
            s.gain_to_receiver = node_gain(s.agent, end.rx_node);
        const double interference = interference_power_mw(i, a.subchannel, here);
        const double gain = node_gain(i, end.rx_node);
        sinr = power_mw * gain / (noise + interference);
        capacity = capacity_bps(bandwidth, power_mw, gain, noise, interference);
      }
    }

    const double delivered_prev = v.delivered_bits;
    v.delivered_bits += capacity * scenario_.slot_s;
    const int pulse = utility_pulse(v.delivered_bits, delivered_prev, v.load_bits);
    if (pulse) v.completed = true;
    const double remaining = std::max(v.load_bits - v.delivered_bits, 0.0);
    const double r = reward_value(pulse, remaining, v.load_bits, scenario_.penalty_weight);

    res.rewards[static_cast<std::size_t>(i)] = r;
    res.utility_pulse[static_cast<std::size_t>(i)] = pulse;
    res.capacity_bps[static_cast<std::size_t>(i)] = capacity;
    StepRecord& rec = res.records[static_cast<std::size_t>(i)];
    rec.t = t_;
    rec.agent = i;
    rec.mode = a.mode;
    rec.subchannel = a.subchannel;
    rec.power_dbm = active[static_cast<std::size_t>(i)]
                        ? space_.power_dbm[static_cast<int>(a.mode)][static_cast<std::size_t>(a.power_level)]
                        : 0.0;
    rec.sinr = sinr;
    rec.capacity_bps = capacity;
    rec.reward = r;

    // observed SINR for the step just taken; hypothetical minimum-power
    // estimates for the modes not exercised
    for (int m = 0; m < kModeCount; ++m) {
      const Mode mode = static_cast<Mode>(m);
      if (mode == a.mode) {
        sinr_next[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = sinr;
      } else if (scenario_.hypothetical_sinr) {
        sinr_next[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] =
            min_power_mw(mode) * mode_gain(i, mode) / noise_for(mode);
      }
    }
  }

  double sum = 0.0;
  for (double r : res.rewards) sum += r;
  res.global_reward = sum / count;

  advance_vehicles(vehicles_, scenario_.slot_s, scenario_.area_x_m);
  refresh_nearest_rsu();
  redraw_fast_fading();
  ++t_;
  res.done = t_ >= scenario_.steps_per_episode;

  build_observations(sinr_next);
  return res;
}

void Env::build_observations(const std::vector<std::array<double, kModeCount>>& sinr) {
  for (int i = 0; i < agent_count(); ++i) {
    const VehicleState& v = vehicles_[static_cast<std::size_t>(i)];
    Observation& o = observations_[static_cast<std::size_t>(i)];
    o.load_bits = v.load_bits;
    for (int m = 0; m < kModeCount; ++m) {
      o.sinr_prev[static_cast<std::size_t>(m)] = sinr[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
      o.remaining_bits[static_cast<std::size_t>(m)] =
          std::max(v.mode_load_bits[static_cast<std::size_t>(m)] - v.delivered_bits, 0.0);
    }
  }
}

CommGraph Env::comm_graph() const {
  CommGraph g;
  const int count = agent_count();
  g.neighbors.resize(static_cast<std::size_t>(count));
  const double r2 = scenario_.neighbor_radius_m * scenario_.neighbor_radius_m;
  for (int i = 0; i < count; ++i) {
    std::vector<std::pair<double, int>> near;
    for (int j = 0; j < count; ++j) {
      if (j == i) continue;
      const double dx = vehicles_[static_cast<std::size_t>(i)].x - vehicles_[static_cast<std::size_t>(j)].x;
      const double dy = vehicles_[static_cast<std::size_t>(i)].y - vehicles_[static_cast<std::size_t>(j)].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= r2) near.emplace_back(d2, j);
    }
    std::sort(near.begin(), near.end());
    for (auto& [d2, j] : near) g.neighbors[static_cast<std::size_t>(i)].push_back(j);
  }
  return g;
}

std::vector<std::vector<std::pair<int, Observation>>> Env::neighbor_views(double sharing,
                                                                          Rng& rng) const {
  if (sharing < 0.0 || sharing > 1.0)
    throw std::invalid_argument("neighbor_views: sharing must be in [0,1]");
  const CommGraph g = comm_graph();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<std::pair<int, Observation>>> views(
      static_cast<std::size_t>(agent_count()));
  for (int i = 0; i < agent_count(); ++i) {
    auto& list = views[static_cast<std::size_t>(i)];
    list.emplace_back(i, observations_[static_cast<std::size_t>(i)]);  // self always retained
    for (int j : g.neighbors[static_cast<std::size_t>(i)]) {
      const bool delivered = sharing >= 1.0 || (sharing > 0.0 && u(rng) < sharing);
      if (delivered) list.emplace_back(j, observations_[static_cast<std::size_t>(j)]);
    }
  }
  return views;
}

}  // namespace satv2x
