#include "satv2x/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <string_view>

namespace satv2x {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("config: double format failure");
  return std::string(buf, end);
}

double parse_double(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    throw ConfigError("config: invalid number for " + key + ": '" + s + "'");
  return v;
}

long parse_int(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || ptr != t.data() + t.size())
    throw ConfigError("config: invalid integer for " + key + ": '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  const std::string t = trim(s);
  if (t == "true") return true;
  if (t == "false") return false;
  throw ConfigError("config: invalid bool for " + key + ": '" + s + "' (use true/false)");
}

std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(parse_double(tok, key));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s, const std::string& key) {
  std::vector<std::uint64_t> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(static_cast<std::uint64_t>(parse_int(tok, key)));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

std::string fmt_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += fmt_double(v[i]);
  }
  return out;
}

std::string fmt_seed_list(const std::vector<std::uint64_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeyHandler {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define F_DOUBLE(sec, name, field)                                                   \
  KeyHandler{sec, name,                                                              \
             [](RunConfig& c, const std::string& s) { c.field = parse_double(s, name); }, \
             [](const RunConfig& c) { return fmt_double(c.field); }}
#define F_INT(sec, name, field)                                                      \
  KeyHandler{sec, name,                                                              \
             [](RunConfig& c, const std::string& s) { c.field = static_cast<int>(parse_int(s, name)); }, \
             [](const RunConfig& c) { return std::to_string(c.field); }}
#define F_BOOL(sec, name, field)                                                     \
  KeyHandler{sec, name,                                                              \
             [](RunConfig& c, const std::string& s) { c.field = parse_bool(s, name); }, \
             [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define F_STRING(sec, name, field)                                                   \
  KeyHandler{sec, name, [](RunConfig& c, const std::string& s) { c.field = trim(s); }, \
             [](const RunConfig& c) { return c.field; }}
#define F_DLIST(sec, name, field)                                                    \
  KeyHandler{sec, name,                                                              \
             [](RunConfig& c, const std::string& s) { c.field = parse_double_list(s, name); }, \
             [](const RunConfig& c) { return fmt_double_list(c.field); }}

const std::vector<KeyHandler>& key_table() {
  static const std::vector<KeyHandler> table = {
      F_DOUBLE("scenario", "area_x_m", scenario.area_x_m),
      F_DOUBLE("scenario", "area_y_m", scenario.area_y_m),
      F_DOUBLE("scenario", "density_per_km2", scenario.density_per_km2),
      F_INT("scenario", "rsu_count", scenario.rsu_count),
      F_INT("scenario", "lanes", scenario.lanes),
      F_INT("scenario", "steps_per_episode", scenario.steps_per_episode),
      F_DOUBLE("scenario", "slot_s", scenario.slot_s),
      F_DOUBLE("scenario", "penalty_weight", scenario.penalty_weight),
      F_DOUBLE("scenario", "neighbor_radius_m", scenario.neighbor_radius_m),
      F_DOUBLE("scenario", "speed_min_mps", scenario.speed_min_mps),
      F_DOUBLE("scenario", "speed_max_mps", scenario.speed_max_mps),
      F_INT("scenario", "terrestrial_subchannels", scenario.terrestrial_subchannels),
      F_DOUBLE("scenario", "terrestrial_bandwidth_hz", scenario.terrestrial_bandwidth_hz),
      F_INT("scenario", "satellite_subchannels", scenario.satellite_subchannels),
      F_DOUBLE("scenario", "satellite_bandwidth_hz", scenario.satellite_bandwidth_hz),
      F_DLIST("scenario", "power_dbm_v2i", scenario.power_dbm_v2i),
      F_DLIST("scenario", "power_dbm_v2s", scenario.power_dbm_v2s),
      F_DLIST("scenario", "power_dbm_v2v", scenario.power_dbm_v2v),
      F_DOUBLE("scenario", "load_bits", scenario.load_bits),
      F_DOUBLE("scenario", "load_bits_v2i", scenario.load_bits_v2i),
      F_DOUBLE("scenario", "load_bits_v2s", scenario.load_bits_v2s),
      F_DOUBLE("scenario", "load_bits_v2v", scenario.load_bits_v2v),
      F_BOOL("scenario", "hypothetical_sinr", scenario.hypothetical_sinr),

      F_DOUBLE("link", "carrier_terrestrial_hz", link.carrier_terrestrial_hz),
      F_DOUBLE("link", "carrier_sat_hz", link.carrier_sat_hz),
      F_DOUBLE("link", "pathloss_exponent", link.pathloss_exponent),
      F_DOUBLE("link", "pathloss_exponent_v2i", link.pathloss_exponent_v2i),
      F_DOUBLE("link", "pathloss_exponent_v2v", link.pathloss_exponent_v2v),
      F_DOUBLE("link", "sat_altitude_m", link.sat_altitude_m),
      F_DOUBLE("link", "sat_elevation_deg", link.sat_elevation_deg),
      F_DOUBLE("link", "sat_tx_gain_db", link.sat_tx_gain_db),
      F_DOUBLE("link", "sat_rx_gain_db", link.sat_rx_gain_db),
      F_DOUBLE("link", "atmospheric_loss_db", link.atmospheric_loss_db),
      F_DOUBLE("link", "noise_psd_dbm_hz", link.noise_psd_dbm_hz),
      F_DOUBLE("link", "noise_figure_vehicle_db", link.noise_figure_vehicle_db),
      F_DOUBLE("link", "noise_figure_bs_db", link.noise_figure_bs_db),
      F_DOUBLE("link", "noise_figure_sat_db", link.noise_figure_sat_db),
      F_DOUBLE("link", "antenna_gain_vehicle_db", link.antenna_gain_vehicle_db),
      F_DOUBLE("link", "antenna_gain_bs_db", link.antenna_gain_bs_db),
      F_DOUBLE("link", "antenna_height_vehicle_m", link.antenna_height_vehicle_m),
      F_DOUBLE("link", "antenna_height_bs_m", link.antenna_height_bs_m),
      F_DOUBLE("link", "shadowing_sigma_db", link.shadowing_sigma_db),

      F_STRING("learner", "variant", learner.variant),
      F_DOUBLE("learner", "sharing_level", learner.sharing_level),
      F_INT("learner", "episodes", learner.episodes),
      F_INT("learner", "minibatch", learner.minibatch),
      F_DOUBLE("learner", "discount", learner.discount),
      F_DOUBLE("learner", "actor_lr", learner.actor_lr),
      F_DOUBLE("learner", "critic_lr", learner.critic_lr),
      F_DOUBLE("learner", "estimator_lr", learner.estimator_lr),
      F_DOUBLE("learner", "entropy_coeff", learner.entropy_coeff),
      F_INT("learner", "actor_hidden", learner.actor_hidden),
      F_INT("learner", "critic_hidden", learner.critic_hidden),
      F_INT("learner", "attention_dim", learner.attention_dim),
      F_INT("learner", "gru_hidden", learner.gru_hidden),
      F_INT("learner", "heads", learner.heads),
      F_DOUBLE("learner", "dropout", learner.dropout),
      F_DOUBLE("learner", "lambda_est", learner.lambda_est),
      F_INT("learner", "est_hidden", learner.est_hidden),
      F_INT("learner", "est_max_neighbors", learner.est_max_neighbors),
      F_INT("learner", "replay_capacity", learner.replay_capacity),
      F_INT("learner", "sil_samples", learner.sil_samples),
      F_INT("learner", "sil_updates_per_episode", learner.sil_updates_per_episode),
      F_DOUBLE("learner", "priority_floor", learner.priority_floor),
      F_INT("learner", "metrics_window", learner.metrics_window),

      KeyHandler{"run", "seed",
                 [](RunConfig& c, const std::string& s) {
                   c.run.seed = static_cast<std::uint64_t>(parse_int(s, "seed"));
                 },
                 [](const RunConfig& c) { return std::to_string(c.run.seed); }},
      KeyHandler{"run", "seeds",
                 [](RunConfig& c, const std::string& s) { c.run.seeds = parse_seed_list(s, "seeds"); },
                 [](const RunConfig& c) { return fmt_seed_list(c.run.seeds); }},
      F_STRING("run", "out_dir", run.out_dir),
      F_BOOL("run", "trace", run.trace),
      F_INT("run", "workers", run.workers),
  };
  return table;
}

#undef F_DOUBLE
#undef F_INT
#undef F_BOOL
#undef F_STRING
#undef F_DLIST

const KeyHandler* find_handler(const std::string& section, const std::string& key) {
  for (const KeyHandler& h : key_table())
    if (section == h.section && key == h.key) return &h;
  return nullptr;
}

}  // namespace

int ScenarioConfig::vehicle_count() const {
  const double area_km2 = (area_x_m / 1e3) * (area_y_m / 1e3);
  return static_cast<int>(std::lround(density_per_km2 * area_km2));
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("scenario: " + msg); };
  if (!(area_x_m > 0.0 && area_y_m > 0.0)) fail("area must be positive");
  if (!(density_per_km2 > 0.0)) fail("density_per_km2 must be > 0");
  if (vehicle_count() < 2) fail("vehicle count must be >= 2 (a V2V peer is required)");
  if (rsu_count < 1) fail("rsu_count must be >= 1");
  if (lanes < 1) fail("lanes must be >= 1");
  if (steps_per_episode < 1) fail("steps_per_episode must be >= 1");
  if (!(slot_s > 0.0)) fail("slot_s must be > 0");
  if (penalty_weight < 0.0) fail("penalty_weight must be >= 0");
  if (!(neighbor_radius_m > 0.0)) fail("neighbor_radius_m must be > 0");
  if (!(speed_min_mps >= 0.0 && speed_max_mps >= speed_min_mps))
    fail("speed range invalid");
  if (terrestrial_subchannels < 1) fail("terrestrial_subchannels must be >= 1");
  if (satellite_subchannels < 1) fail("satellite_subchannels must be >= 1");
  if (!(terrestrial_bandwidth_hz > 0.0)) fail("terrestrial_bandwidth_hz must be > 0");
  if (!(satellite_bandwidth_hz > 0.0)) fail("satellite_bandwidth_hz must be > 0");
  for (const auto* set : {&power_dbm_v2i, &power_dbm_v2s, &power_dbm_v2v})
    if (set->empty()) fail("power sets must be nonempty");
  if (!(load_bits > 0.0)) fail("load_bits must be > 0");
  for (double v : {load_bits_v2i, load_bits_v2s, load_bits_v2v})
    if (v < 0.0) fail("per-mode load overrides must be >= 0");
}

void LearnerSection::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("learner: " + msg); };
  static const char* known[] = {"FULL", "NF", "NO_SIL", "NO_MHA", "MAAC", "RANDOM", "GREEDY_SINR"};
  bool ok = false;
  for (const char* k : known) ok = ok || variant == k;
  if (!ok) fail("unknown variant '" + variant + "'");
  if (!(sharing_level >= 0.0 && sharing_level <= 1.0)) fail("sharing_level must be in [0,1]");
  if (episodes < 1) fail("episodes must be >= 1");
  if (minibatch < 1) fail("minibatch must be >= 1");
  if (!(discount >= 0.0 && discount <= 1.0)) fail("discount must be in [0,1]");
  if (!(actor_lr > 0.0 && critic_lr > 0.0 && estimator_lr > 0.0)) fail("learning rates must be > 0");
  if (entropy_coeff < 0.0) fail("entropy_coeff must be >= 0");
  if (actor_hidden < 1 || critic_hidden < 1 || gru_hidden < 1 || est_hidden < 1)
    fail("hidden sizes must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (attention_dim < 1 || attention_dim % heads != 0)
    fail("attention_dim must be a positive multiple of heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0,1)");
  if (lambda_est < 0.0) fail("lambda_est must be >= 0");
  if (est_max_neighbors < 1) fail("est_max_neighbors must be >= 1");
  if (replay_capacity < 1) fail("replay_capacity must be >= 1");
  if (sil_samples < 1) fail("sil_samples must be >= 1");
  if (sil_updates_per_episode < 0) fail("sil_updates_per_episode must be >= 0");
  if (!(priority_floor > 0.0)) fail("priority_floor must be > 0");
  if (metrics_window < 1) fail("metrics_window must be >= 1");
}

void RunSection::validate() const {
  if (seeds.empty()) throw ConfigError("run: seeds must be nonempty");
  if (out_dir.empty()) throw ConfigError("run: out_dir must be nonempty");
  if (workers < 0) throw ConfigError("run: workers must be >= 0");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "scenario" && section != "link" && section != "learner" && section != "run")
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
    const KeyHandler* h = find_handler(section, key);
    if (!h)
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key +
                        "' in section [" + section + "]");
    h->set(cfg, value);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  std::string current;
  for (const KeyHandler& h : key_table()) {
    if (current != h.section) {
      if (!current.empty()) out += '\n';
      current = h.section;
      out += '[' + current + "]\n";
    }
    out += std::string(h.key) + " = " + h.get(*this) + '\n';
  }
  return out;
}

void RunConfig::validate() const {
  scenario.validate();
  link.validate();
  learner.validate();
  run.validate();
}

std::uint64_t RunConfig::hash() const {
  // run bookkeeping (output paths, worker counts) stays out of the hash so
  // the same experiment hashes alike wherever it lands
  std::string text;
  for (const KeyHandler& h : key_table()) {
    if (std::string_view(h.section) == "run") continue;
    text += std::string(h.key) + "=" + h.get(*this) + '\n';
  }
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace satv2x
