#include "satv2x/channel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace satv2x {

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double linear) { return 10.0 * std::log10(linear); }
double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

void LinkBudgetConfig::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0))
      throw std::invalid_argument(std::string("link: ") + field + " must be > 0");
  };
  auto finite = [](double v, const char* field) {
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string("link: ") + field + " must be finite");
  };
  positive(carrier_terrestrial_hz, "carrier_terrestrial_hz");
  positive(carrier_sat_hz, "carrier_sat_hz");
  positive(pathloss_exponent, "pathloss_exponent");
  if (pathloss_exponent_v2i < 0.0)
    throw std::invalid_argument("link: pathloss_exponent_v2i must be >= 0 (0 = default)");
  if (pathloss_exponent_v2v < 0.0)
    throw std::invalid_argument("link: pathloss_exponent_v2v must be >= 0 (0 = default)");
  positive(sat_altitude_m, "sat_altitude_m");
  if (!(sat_elevation_deg > 0.0 && sat_elevation_deg <= 90.0))
    throw std::invalid_argument("link: sat_elevation_deg must be in (0, 90]");
  finite(sat_tx_gain_db, "sat_tx_gain_db");
  finite(sat_rx_gain_db, "sat_rx_gain_db");
  finite(atmospheric_loss_db, "atmospheric_loss_db");
  finite(noise_psd_dbm_hz, "noise_psd_dbm_hz");
  finite(noise_figure_vehicle_db, "noise_figure_vehicle_db");
  finite(noise_figure_bs_db, "noise_figure_bs_db");
  finite(noise_figure_sat_db, "noise_figure_sat_db");
  finite(antenna_gain_vehicle_db, "antenna_gain_vehicle_db");
  finite(antenna_gain_bs_db, "antenna_gain_bs_db");
  positive(antenna_height_vehicle_m, "antenna_height_vehicle_m");
  positive(antenna_height_bs_m, "antenna_height_bs_m");
  if (shadowing_sigma_db < 0.0)
    throw std::invalid_argument("link: shadowing_sigma_db must be >= 0");
}

double LinkBudgetConfig::slant_range_m() const {
  return sat_altitude_m / std::sin(sat_elevation_deg * M_PI / 180.0);
}

double terrestrial_gain(double dist_m, double kappa, const FadingDraw& fading) {
  if (!(dist_m > 0.0)) throw std::domain_error("terrestrial_gain: dist must be > 0");
  if (fading.fast < 0.0) throw std::domain_error("terrestrial_gain: fast fading must be >= 0");
  return std::pow(dist_m, -kappa) * fading.fast * db_to_linear(fading.shadowing_db);
}

double free_space_loss_db(double dist_m, double freq_hz) {
  if (!(dist_m > 0.0)) throw std::domain_error("free_space_loss: dist must be > 0");
  if (!(freq_hz > 0.0)) throw std::domain_error("free_space_loss: freq must be > 0");
  return 20.0 * std::log10(dist_m / 1e3) + 20.0 * std::log10(freq_hz / 1e9) + 92.45;
}

double satellite_gain(const LinkBudgetConfig& cfg, double slant_range_m) {
  if (slant_range_m < cfg.sat_altitude_m)
    throw std::domain_error("satellite_gain: slant range below orbit altitude");
  const double budget_db = cfg.sat_tx_gain_db + cfg.sat_rx_gain_db - cfg.atmospheric_loss_db -
                           free_space_loss_db(slant_range_m, cfg.carrier_sat_hz);
  return db_to_linear(budget_db);
}

double noise_power_mw(double bandwidth_hz, double noise_figure_db, double psd_dbm_hz) {
  if (!(bandwidth_hz > 0.0)) throw std::domain_error("noise_power: bandwidth must be > 0");
  return dbm_to_mw(psd_dbm_hz + 10.0 * std::log10(bandwidth_hz) + noise_figure_db);
}

double interference_power_mw(int me, int my_subchannel,
                             std::span<const InterferenceSource> sources) {
  double total = 0.0;
  for (const InterferenceSource& s : sources) {
    if (s.agent == me || s.subchannel != my_subchannel) continue;
    total += s.power_mw * s.gain_to_receiver;
  }
  return total;
}

double capacity_bps(double bandwidth_hz, double power_mw, double gain,
                    double noise_mw, double interference_mw) {
  if (!(bandwidth_hz > 0.0)) throw std::domain_error("capacity: bandwidth must be > 0");
  if (!(noise_mw > 0.0)) throw std::domain_error("capacity: noise must be > 0");
  if (power_mw < 0.0 || gain < 0.0 || interference_mw < 0.0)
    throw std::domain_error("capacity: negative input");
  const double sinr = power_mw * gain / (noise_mw + interference_mw);
  return bandwidth_hz * std::log2(1.0 + sinr);
}

}  // namespace satv2x
