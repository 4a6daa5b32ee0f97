#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace satv2x {

// All link math runs in linear mW / Hz; dB shows up only at configuration
// boundaries and in these conversion helpers.
double db_to_linear(double db);
double linear_to_db(double linear);
double dbm_to_mw(double dbm);
double mw_to_dbm(double mw);

enum class Band { kTerrestrialS, kSatelliteKa };

struct Subchannel {
  int id = 0;
  Band band = Band::kTerrestrialS;
  double bandwidth_hz = 0.0;
};

struct FadingDraw {
  double shadowing_db = 0.0;  // log-normal in dB
  double fast = 1.0;          // |h|^2, unit-mean exponential (Rayleigh amplitude)
};

struct LinkBudgetConfig {
  double carrier_terrestrial_hz = 3.5e9;
  double carrier_sat_hz = 30e9;
  double pathloss_exponent = 3.0;
  // per-receiver-class overrides; 0 means "use pathloss_exponent"
  double pathloss_exponent_v2i = 0.0;
  double pathloss_exponent_v2v = 0.0;
  double sat_altitude_m = 550e3;
  double sat_elevation_deg = 90.0;
  double sat_tx_gain_db = 43.2;
  double sat_rx_gain_db = 30.5;
  // combined atmospheric attenuation including scintillation
  double atmospheric_loss_db = 2.2;
  double noise_psd_dbm_hz = -174.0;
  double noise_figure_vehicle_db = 9.0;
  double noise_figure_bs_db = 5.0;
  double noise_figure_sat_db = 1.2;
  double antenna_gain_vehicle_db = 3.0;
  double antenna_gain_bs_db = 8.0;
  double antenna_height_vehicle_m = 1.5;
  double antenna_height_bs_m = 25.0;
  double shadowing_sigma_db = 8.0;

  void validate() const;  // throws std::invalid_argument naming the field
  double slant_range_m() const;
  double kappa_to_bs() const { return pathloss_exponent_v2i > 0.0 ? pathloss_exponent_v2i : pathloss_exponent; }
  double kappa_to_vehicle() const { return pathloss_exponent_v2v > 0.0 ? pathloss_exponent_v2v : pathloss_exponent; }
};

// Distance-power-law gain with multiplicative fading: d^-kappa * fast * 10^(shadowing/10).
// dist <= 0 is a degenerate co-located transceiver and throws std::domain_error.
double terrestrial_gain(double dist_m, double kappa, const FadingDraw& fading);

// 20 log10(d_km) + 20 log10(f_GHz) + 92.45
double free_space_loss_db(double dist_m, double freq_hz);

// Dedicated-link budget: linear(G_T + G_R - A_a - FSPL(slant, f_sat)).
double satellite_gain(const LinkBudgetConfig& cfg, double slant_range_m);

// linear mW of (psd + 10 log10(B) + NF)
double noise_power_mw(double bandwidth_hz, double noise_figure_db, double psd_dbm_hz);

struct InterferenceSource {
  int agent = 0;
  int subchannel = 0;
  double power_mw = 0.0;
  double gain_to_receiver = 0.0;  // linear, toward the victim's receiver
};

// Sum of co-channel received powers from everyone else on my subchannel.
double interference_power_mw(int me, int my_subchannel,
                             std::span<const InterferenceSource> sources);

// Shannon capacity B log2(1 + P g / (N0 + I)) in bit/s. Satellite links are
// dedicated and must be invoked with interference 0.
double capacity_bps(double bandwidth_hz, double power_mw, double gain,
                    double noise_mw, double interference_mw);

}  // namespace satv2x
