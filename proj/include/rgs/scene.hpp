#pragma once

#include "rgs/geometry.hpp"
#include "rgs/image.hpp"
#include "rgs/radar_config.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

/// Anisotropic planar Gaussian with a radar power return ratio.
struct Gaussian2D {
  Eigen::Vector2d mean{0.0, 0.0};   // world frame, m
  double orient = 0.0;              // rad
  Eigen::Vector2d scales{0.1, 0.1}; // principal std devs, m
  double power_ratio = 0.0;         // RCS-like, >= 0
};

/// World covariance Rot(orient) * diag(scales^2) * Rot(orient)^T.
inline Eigen::Matrix2d covariance(const Gaussian2D& g) {
  const Eigen::Matrix2d r = rotation2d(g.orient);
  const Eigen::Vector2d s2 = g.scales.cwiseProduct(g.scales);
  return r * s2.asDiagonal() * r.transpose();
}

struct Bounds {
  Eigen::Vector2d min{-50.0, -50.0};
  Eigen::Vector2d max{50.0, 50.0};

  bool contains(const Eigen::Vector2d& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
};

/// Lifecycle policy: scale clamps, budget, pruning threshold.
struct SceneLimits {
  double s_min = 0.05;
  double s_max = 2.0;
  std::size_t n_max = 5000;
  double prune_threshold = 1e-4;  // minimum power_ratio kept by prune
  int densify_interval = 5;       // keyframes between densify passes
};

struct GaussianScene {
  std::vector<Gaussian2D> gaussians;
  Bounds bounds;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
};

namespace detail {

/// Local maximum above threshold: >= every 8-neighbor and strictly greater
/// than the neighbors at lexicographically smaller (range, azimuth) index,
/// so a flat plateau yields exactly one detection at its lowest index.
inline bool is_local_max(const RaImage& img, int r, int c, double threshold) {
  const double v = img(r, c);
  if (!(v > threshold)) return false;
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const int nr = r + dr;
      const int nc = c + dc;
      if (nr < 0 || nr >= img.rows() || nc < 0 || nc >= img.cols()) continue;
      const double nv = img(nr, nc);
      const bool lower_index = dr < 0 || (dr == 0 && dc < 0);
      if (lower_index ? !(v > nv) : !(v >= nv)) return false;
    }
  }
  return true;
}

inline Gaussian2D gaussian_from_bin(int r, int a, double power, const Pose2& pose,
                                    const RadarConfig& cfg, const SceneLimits& limits) {
  const double range = (r + 0.5) * cfg.range_res;
  const double azimuth = -cfg.azimuth_fov / 2.0 + a * cfg.azimuth_step();
  const Eigen::Vector2d p_sensor{range * std::cos(azimuth), range * std::sin(azimuth)};
  Gaussian2D g;
  g.mean = sensor_to_world(p_sensor, pose);
  g.orient = wrap_angle(pose.yaw + azimuth);
  g.scales.x() = std::clamp(cfg.range_res, limits.s_min, limits.s_max);
  g.scales.y() = std::clamp(range * cfg.azimuth_step(), limits.s_min, limits.s_max);
  // invert the radar equation for the observed bin power
  const double r2 = range * range;
  g.power_ratio = std::max(0.0, power * r2 * r2 / cfg.power_const);
  return g;
}

}  // namespace detail

inline Bounds sensor_coverage_bounds(const Pose2& pose, const RadarConfig& cfg) {
  Bounds b;
  const double reach = cfg.max_range();
  b.min = pose.translation().array() - reach;
  b.max = pose.translation().array() + reach;
  return b;
}

/// One Gaussian per local maximum of the RA image above tau_init,
/// back-projected through the pose via bin centers.
inline GaussianScene init_from_frame(const RaImage& frame_ra, const Pose2& pose,
                                     const RadarConfig& cfg, double tau_init,
                                     const SceneLimits& limits, const Bounds& bounds) {
  GaussianScene scene;
  scene.bounds = bounds;
  for (int r = 0; r < frame_ra.rows(); ++r) {
    for (int a = 0; a < frame_ra.cols(); ++a) {
      if (scene.gaussians.size() >= limits.n_max) return scene;
      if (!detail::is_local_max(frame_ra, r, a, tau_init)) continue;
      Gaussian2D g = detail::gaussian_from_bin(r, a, frame_ra(r, a), pose, cfg, limits);
      if (!bounds.contains(g.mean)) continue;
      scene.gaussians.push_back(g);
    }
  }
  return scene;
}

inline GaussianScene init_from_frame(const RaImage& frame_ra, const Pose2& pose,
                                     const RadarConfig& cfg, double tau_init,
                                     const SceneLimits& limits = {}) {
  return init_from_frame(frame_ra, pose, cfg, tau_init, limits,
                         sensor_coverage_bounds(pose, cfg));
}

/// Spawns Gaussians at bins where measured power exceeds the render by more
/// than tau_d, highest residual first, respecting the scene budget.
inline GaussianScene densify(const GaussianScene& scene, const RaImage& frame_ra,
                             const RaImage& rendered_ra, const Pose2& pose,
                             const RadarConfig& cfg, double tau_d,
                             const SceneLimits& limits = {}) {
  if (!frame_ra.same_shape(rendered_ra)) {
    throw std::invalid_argument("densify: measured and rendered image shapes differ");
  }
  struct Candidate {
    double residual;
    int r, a;
  };
  std::vector<Candidate> candidates;
  for (int r = 0; r < frame_ra.rows(); ++r) {
    for (int a = 0; a < frame_ra.cols(); ++a) {
      const double residual = frame_ra(r, a) - rendered_ra(r, a);
      if (residual > tau_d) candidates.push_back({residual, r, a});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& lhs, const Candidate& rhs) {
    if (lhs.residual != rhs.residual) return lhs.residual > rhs.residual;
    return std::pair(lhs.r, lhs.a) < std::pair(rhs.r, rhs.a);
  });

  GaussianScene out = scene;
  for (const Candidate& c : candidates) {
    if (out.gaussians.size() >= limits.n_max) break;
    Gaussian2D g = detail::gaussian_from_bin(c.r, c.a, c.residual, pose, cfg, limits);
    if (!out.bounds.contains(g.mean)) continue;
    out.gaussians.push_back(g);
  }
  return out;
}

/// Removes Gaussians below the power threshold or outside the scene bounds.
inline GaussianScene prune(const GaussianScene& scene, double tau_p) {
  GaussianScene out;
  out.bounds = scene.bounds;
  out.gaussians.reserve(scene.gaussians.size());
  for (const Gaussian2D& g : scene.gaussians) {
    if (g.power_ratio < tau_p) continue;
    if (!scene.bounds.contains(g.mean)) continue;
    out.gaussians.push_back(g);
  }
  return out;
}

/// Text format: one header line "count xmin ymin xmax ymax", then one
/// Gaussian per line as "mean_x,mean_y,orient,s1,s2,power_ratio".
inline void save_scene(const GaussianScene& scene, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_scene: cannot open " + path);
  out.precision(std::numeric_limits<double>::max_digits10);
  out << scene.gaussians.size() << ' ' << scene.bounds.min.x() << ' ' << scene.bounds.min.y()
      << ' ' << scene.bounds.max.x() << ' ' << scene.bounds.max.y() << '\n';
  for (const Gaussian2D& g : scene.gaussians) {
    out << g.mean.x() << ',' << g.mean.y() << ',' << g.orient << ',' << g.scales.x() << ','
        << g.scales.y() << ',' << g.power_ratio << '\n';
  }
  if (!out) throw std::runtime_error("save_scene: write failed for " + path);
}

inline GaussianScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_scene: cannot open " + path);
  auto fail = [&path](int line_no, const std::string& what) {
    throw std::runtime_error("load_scene: " + path + ": line " + std::to_string(line_no) + ": " +
                             what);
  };

  GaussianScene scene;
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) fail(1, "missing header");
  ++line_no;
  std::size_t count = 0;
  {
    std::istringstream hdr(line);
    if (!(hdr >> count >> scene.bounds.min.x() >> scene.bounds.min.y() >> scene.bounds.max.x() >>
          scene.bounds.max.y())) {
      fail(line_no, "malformed header");
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    double fields[6];
    for (int i = 0; i < 6; ++i) {
      if (!std::getline(ss, cell, ',')) fail(line_no, "expected 6 comma-separated fields");
      try {
        fields[i] = std::stod(cell);
      } catch (const std::exception&) {
        fail(line_no, "bad number '" + cell + "'");
      }
    }
    Gaussian2D g;
    g.mean = {fields[0], fields[1]};
    g.orient = fields[2];
    g.scales = {fields[3], fields[4]};
    g.power_ratio = fields[5];
    if (!(g.scales.x() > 0.0 && g.scales.y() > 0.0)) fail(line_no, "scales must be > 0");
    if (g.power_ratio < 0.0) fail(line_no, "power_ratio must be >= 0");
    if (!g.mean.allFinite() || !std::isfinite(g.orient) || !g.scales.allFinite() ||
        !std::isfinite(g.power_ratio)) {
      fail(line_no, "non-finite field");
    }
    if (!scene.bounds.contains(g.mean)) fail(line_no, "mean outside bounds");
    scene.gaussians.push_back(g);
  }
  if (scene.gaussians.size() != count) {
    fail(line_no, "header count " + std::to_string(count) + " does not match " +
                      std::to_string(scene.gaussians.size()) + " records");
  }
  return scene;
}

}  // namespace rgs
