#pragma once

#include "rgs/backend.hpp"
#include "rgs/losses.hpp"
#include "rgs/radar_config.hpp"
#include "rgs/simulator.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat "key = value" configuration file; '#' starts a comment, keys are
/// dot-namespaced, values are scalars or comma-separated lists.
class KeyValueFile {
 public:
  static KeyValueFile parse_string(const std::string& text,
                                   const std::string& origin = "<string>") {
    KeyValueFile kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string stripped = strip(line.substr(0, line.find('#')));
      if (stripped.empty()) continue;
      const auto eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ": line " + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key = strip(stripped.substr(0, eq));
      const std::string value = strip(stripped.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(origin + ": line " + std::to_string(line_no) + ": empty key");
      }
      kv.values_[key] = value;
    }
    return kv;
  }

  static KeyValueFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const {
    const auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return def;
    return parse_double(key, it->second);
  }

  int get_int(const std::string& key, int def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      std::size_t pos = 0;
      const int v = std::stoi(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad integer '" + it->second + "'");
    }
  }

  bool get_bool(const std::string& key, bool def) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config key '" + key + "': bad boolean '" + it->second + "'");
  }

  std::vector<double> get_list(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return {};
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(parse_double(key, strip(cell)));
    return out;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void set_double(const std::string& key, double value) {
    std::ostringstream ss;
    ss.precision(std::numeric_limits<double>::max_digits10);
    ss << value;
    values_[key] = ss.str();
  }

  void set_int(const std::string& key, long long value) { values_[key] = std::to_string(value); }

  void set_bool(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [key, value] : values_) out << key << " = " << value << '\n';
    return out.str();
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file " + path);
    out << serialize();
    if (!out) throw ConfigError("write failed for config file " + path);
  }

  /// Overlay: entries of `other` win.
  void merge(const KeyValueFile& other) {
    for (const auto& [key, value] : other.values_) values_[key] = value;
  }

 private:
  static std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double parse_double(const std::string& key, const std::string& value) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad number '" + value + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

inline RadarConfig radar_from_config(const KeyValueFile& kv) {
  RadarConfig cfg;
  cfg.n_range = kv.get_int("radar.n_range", cfg.n_range);
  cfg.n_azimuth = kv.get_int("radar.n_azimuth", cfg.n_azimuth);
  cfg.n_doppler = kv.get_int("radar.n_doppler", cfg.n_doppler);
  cfg.range_res = kv.get_double("radar.range_res", cfg.range_res);
  cfg.azimuth_fov = kv.get_double("radar.azimuth_fov", cfg.azimuth_fov);
  cfg.doppler_res = kv.get_double("radar.doppler_res", cfg.doppler_res);
  cfg.power_const = kv.get_double("radar.power_const", cfg.power_const);
  cfg.noise_floor = kv.get_double("radar.noise_floor", cfg.noise_floor);
  cfg.bin_window = kv.get_int("radar.bin_window", cfg.bin_window);
  cfg.kernel_sigma_factor = kv.get_double("radar.kernel_sigma_factor", cfg.kernel_sigma_factor);
  const std::string gain = kv.get_string("radar.gain_table", "raised-cosine");
  if (gain == "raised-cosine") {
    cfg.gain_table = raised_cosine_gain(cfg.n_azimuth, cfg.azimuth_fov);
  } else {
    cfg.gain_table = kv.get_list("radar.gain_table");
  }
  cfg.validate();
  return cfg;
}

inline void radar_to_config(const RadarConfig& cfg, KeyValueFile& kv) {
  kv.set_int("radar.n_range", cfg.n_range);
  kv.set_int("radar.n_azimuth", cfg.n_azimuth);
  kv.set_int("radar.n_doppler", cfg.n_doppler);
  kv.set_double("radar.range_res", cfg.range_res);
  kv.set_double("radar.azimuth_fov", cfg.azimuth_fov);
  kv.set_double("radar.doppler_res", cfg.doppler_res);
  kv.set_double("radar.power_const", cfg.power_const);
  kv.set_double("radar.noise_floor", cfg.noise_floor);
  kv.set_int("radar.bin_window", cfg.bin_window);
  kv.set_double("radar.kernel_sigma_factor", cfg.kernel_sigma_factor);
  std::ostringstream gain;
  gain.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < cfg.gain_table.size(); ++i) {
    if (i) gain << ',';
    gain << cfg.gain_table[i];
  }
  kv.set("radar.gain_table", gain.str());
}

inline NoiseParams noise_from_config(const KeyValueFile& kv) {
  NoiseParams n;
  n.speckle = kv.get_double("noise.speckle", n.speckle);
  n.floor_std = kv.get_double("noise.floor_std", n.floor_std);
  n.doppler_std = kv.get_double("noise.doppler_std", n.doppler_std);
  n.gyro_std = kv.get_double("noise.gyro_std", n.gyro_std);
  n.gyro_bias = kv.get_double("noise.gyro_bias", n.gyro_bias);
  n.vel_std = kv.get_double("noise.vel_std", n.vel_std);
  n.scene_jitter = kv.get_double("noise.scene_jitter", n.scene_jitter);
  n.validate();
  return n;
}

inline void noise_to_config(const NoiseParams& n, KeyValueFile& kv) {
  kv.set_double("noise.speckle", n.speckle);
  kv.set_double("noise.floor_std", n.floor_std);
  kv.set_double("noise.doppler_std", n.doppler_std);
  kv.set_double("noise.gyro_std", n.gyro_std);
  kv.set_double("noise.gyro_bias", n.gyro_bias);
  kv.set_double("noise.vel_std", n.vel_std);
  kv.set_double("noise.scene_jitter", n.scene_jitter);
}

inline LossWeights weights_from_config(const KeyValueFile& kv) {
  LossWeights w;
  w.lambda_ssim = kv.get_double("weights.lambda_ssim", w.lambda_ssim);
  w.lambda_sigma = kv.get_double("weights.lambda_sigma", w.lambda_sigma);
  w.ssim_window = kv.get_int("weights.ssim_window", w.ssim_window);
  w.rd_weight = kv.get_double("weights.rd_weight", w.rd_weight);
  w.scale_limit = kv.get_double("weights.scale_limit", w.scale_limit);
  w.validate();
  return w;
}

inline OptimizerConfig optimizer_from_config(const KeyValueFile& kv) {
  OptimizerConfig opt;
  opt.lr_pose_xy = kv.get_double("opt.lr_pose_xy", opt.lr_pose_xy);
  opt.lr_pose_yaw = kv.get_double("opt.lr_pose_yaw", opt.lr_pose_yaw);
  opt.lr_mean = kv.get_double("opt.lr_mean", opt.lr_mean);
  opt.lr_orient = kv.get_double("opt.lr_orient", opt.lr_orient);
  opt.lr_scale = kv.get_double("opt.lr_scale", opt.lr_scale);
  opt.lr_power = kv.get_double("opt.lr_power", opt.lr_power);
  opt.iters_pose = kv.get_int("opt.iters_pose", opt.iters_pose);
  opt.iters_map = kv.get_int("opt.iters_map", opt.iters_map);
  opt.iters_ba = kv.get_int("opt.iters_ba", opt.iters_ba);
  opt.adam_beta1 = kv.get_double("opt.adam_beta1", opt.adam_beta1);
  opt.adam_beta2 = kv.get_double("opt.adam_beta2", opt.adam_beta2);
  opt.adam_eps = kv.get_double("opt.adam_eps", opt.adam_eps);
  opt.validate();
  return opt;
}

inline BackendOptions backend_from_config(const KeyValueFile& kv) {
  BackendOptions opts;
  opts.opt = optimizer_from_config(kv);
  opts.weights = weights_from_config(kv);
  const std::string window = kv.get_string("backend.window", "radius");
  if (window == "radius") {
    opts.ba_window.kind = WindowKind::Radius;
  } else if (window == "sliding") {
    opts.ba_window.kind = WindowKind::Sliding;
  } else {
    throw ConfigError("backend.window must be 'radius' or 'sliding'");
  }
  opts.ba_window.r_ba = kv.get_double("backend.r_ba", opts.ba_window.r_ba);
  opts.ba_window.n_sliding = kv.get_int("backend.n_sliding", opts.ba_window.n_sliding);
  opts.map_window = kv.get_int("backend.map_window", opts.map_window);
  opts.kf_translation = kv.get_double("backend.kf_translation", opts.kf_translation);
  opts.kf_rotation = kv.get_double("backend.kf_rotation_deg", 10.0) * kPi / 180.0;
  opts.kf_every_frames = kv.get_int("backend.kf_every_frames", opts.kf_every_frames);
  opts.tau_init_factor = kv.get_double("backend.tau_init_factor", opts.tau_init_factor);
  opts.tau_d_factor = kv.get_double("backend.tau_d_factor", opts.tau_d_factor);
  opts.limits.s_min = kv.get_double("scene.s_min", opts.limits.s_min);
  opts.limits.s_max = kv.get_double("scene.s_max", opts.limits.s_max);
  opts.limits.n_max = static_cast<std::size_t>(
      kv.get_int("scene.n_max", static_cast<int>(opts.limits.n_max)));
  opts.limits.prune_threshold = kv.get_double("scene.prune_threshold",
                                              opts.limits.prune_threshold);
  opts.limits.densify_interval = kv.get_int("scene.densify_interval",
                                            opts.limits.densify_interval);
  opts.world_bounds.min = {kv.get_double("world.min_x", -60.0),
                           kv.get_double("world.min_y", -60.0)};
  opts.world_bounds.max = {kv.get_double("world.max_x", 60.0),
                           kv.get_double("world.max_y", 60.0)};
  return opts;
}

}  // namespace rgs
