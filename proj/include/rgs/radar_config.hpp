#pragma once

#include "rgs/geometry.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

/// Sensor geometry, bin resolutions and radar-equation constants.
///
/// power_const folds the transmit power, antenna gain, wavelength and loss
/// terms of the radar equation into a single scalar; gain_table is the
/// normalized per-azimuth-bin antenna profile used by the range-Doppler
/// conversion.
struct RadarConfig {
  int n_range = 64;
  int n_azimuth = 48;
  int n_doppler = 16;
  double range_res = 0.125;           // m per range bin
  double azimuth_fov = kPi / 2.0;     // rad, symmetric about boresight
  double doppler_res = 0.25;          // m/s per Doppler bin
  std::vector<double> gain_table;     // size n_azimuth, max entry 1
  double power_const = 1.0;
  double noise_floor = 0.0;
  int bin_window = 10;                // Doppler bins receiving soft-binned mass
  double kernel_sigma_factor = 3.0;   // kernel bandwidth in Doppler-bin units

  double max_range() const { return n_range * range_res; }

  /// Spacing between adjacent azimuth bin centers.
  double azimuth_step() const { return azimuth_fov / (n_azimuth - 1); }

  void validate() const {
    if (n_range < 2 || n_azimuth < 2 || n_doppler < 2) {
      throw std::invalid_argument("RadarConfig: all bin counts must be >= 2");
    }
    if (range_res <= 0.0 || doppler_res <= 0.0) {
      throw std::invalid_argument("RadarConfig: resolutions must be > 0");
    }
    if (!(azimuth_fov > 0.0 && azimuth_fov <= kPi)) {
      throw std::invalid_argument("RadarConfig: azimuth_fov must be in (0, pi]");
    }
    if (gain_table.size() != static_cast<std::size_t>(n_azimuth)) {
      throw std::invalid_argument("RadarConfig: gain_table length must equal n_azimuth");
    }
    double max_gain = 0.0;
    for (double g : gain_table) {
      if (g < 0.0) throw std::invalid_argument("RadarConfig: gain_table entries must be >= 0");
      max_gain = std::max(max_gain, g);
    }
    if (std::abs(max_gain - 1.0) > 1e-9) {
      throw std::invalid_argument("RadarConfig: gain_table must be normalized to max 1");
    }
    if (noise_floor < 0.0) throw std::invalid_argument("RadarConfig: noise_floor must be >= 0");
    if (bin_window < 1) throw std::invalid_argument("RadarConfig: bin_window must be >= 1");
    if (kernel_sigma_factor <= 0.0) {
      throw std::invalid_argument("RadarConfig: kernel_sigma_factor must be > 0");
    }
  }
};

/// Raised-cosine antenna profile sampled at azimuth bin centers and
/// renormalized so the largest sample is 1.
inline std::vector<double> raised_cosine_gain(int n_azimuth, double fov) {
  if (n_azimuth < 2) throw std::invalid_argument("raised_cosine_gain: n_azimuth must be >= 2");
  const double half = fov / 2.0;
  const double step = fov / (n_azimuth - 1);
  std::vector<double> gain(n_azimuth);
  for (int a = 0; a < n_azimuth; ++a) {
    const double theta = -half + a * step;
    const double c = std::cos(kPi * theta / (2.0 * half));
    gain[a] = c * c;
  }
  const double max_gain = *std::max_element(gain.begin(), gain.end());
  if (max_gain <= 0.0) {
    throw std::invalid_argument("raised_cosine_gain: profile degenerate for this bin count");
  }
  for (double& g : gain) g /= max_gain;
  return gain;
}

/// Returns a config with every derived field filled from the defaults above.
inline RadarConfig default_radar_config() {
  RadarConfig cfg;
  cfg.gain_table = raised_cosine_gain(cfg.n_azimuth, cfg.azimuth_fov);
  return cfg;
}

/// Bin-center coordinates for each measurement axis.
struct PolarGrid {
  std::vector<double> range_centers;    // m
  std::vector<double> azimuth_centers;  // rad
  std::vector<double> doppler_centers;  // m/s
};

inline PolarGrid grid_from_config(const RadarConfig& cfg) {
  PolarGrid grid;
  grid.range_centers.resize(cfg.n_range);
  for (int n = 0; n < cfg.n_range; ++n) {
    grid.range_centers[n] = (n + 0.5) * cfg.range_res;
  }
  grid.azimuth_centers.resize(cfg.n_azimuth);
  const double half = cfg.azimuth_fov / 2.0;
  for (int a = 0; a < cfg.n_azimuth; ++a) {
    grid.azimuth_centers[a] = -half + a * cfg.azimuth_step();
  }
  grid.doppler_centers.resize(cfg.n_doppler);
  for (int d = 0; d < cfg.n_doppler; ++d) {
    grid.doppler_centers[d] = (d - (cfg.n_doppler - 1) / 2.0) * cfg.doppler_res;
  }
  return grid;
}

/// Received power from the radar equation, power_const * sigma / range^4.
inline double received_power(double sigma, double range, const RadarConfig& cfg) {
  if (range <= 0.0) throw std::domain_error("received_power: range must be > 0");
  const double r2 = range * range;
  return cfg.power_const * sigma / (r2 * r2);
}

}  // namespace rgs
