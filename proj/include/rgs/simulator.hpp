#pragma once

#include "rgs/frontend.hpp"
#include "rgs/geometry.hpp"
#include "rgs/image.hpp"
#include "rgs/radar_config.hpp"
#include "rgs/renderer.hpp"
#include "rgs/rng.hpp"
#include "rgs/scene.hpp"
#include "rgs/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

/// Measurement corruption knobs; all default to zero (inverse-crime mode).
struct NoiseParams {
  double speckle = 0.0;      // multiplicative, unit-mean exponential
  double floor_std = 0.0;    // additive power noise std
  double doppler_std = 0.0;  // m/s per-point Doppler noise
  double gyro_std = 0.0;     // rad/s
  double gyro_bias = 0.0;    // rad/s constant offset
  double vel_std = 0.0;      // m/s common-mode error on the point-generating velocity
  double scene_jitter = 0.0; // m perturbation of the ground-truth scene before synthesis

  void validate() const {
    for (double v : {speckle, floor_std, doppler_std, gyro_std, vel_std, scene_jitter}) {
      if (v < 0.0) throw std::invalid_argument("NoiseParams: fields must be >= 0");
    }
  }
};

enum class SceneKind { Room, SmallLoop, LargeLoop };

inline SceneKind scene_kind_from_string(const std::string& s) {
  if (s == "room") return SceneKind::Room;
  if (s == "small-loop") return SceneKind::SmallLoop;
  if (s == "large-loop") return SceneKind::LargeLoop;
  throw std::invalid_argument("unknown scenario kind '" + s + "'");
}

inline std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::Room: return "room";
    case SceneKind::SmallLoop: return "small-loop";
    default: return "large-loop";
  }
}

namespace detail {

/// Axis-aligned rectangle outline traversed counterclockwise with rounded
/// corners; positions, tangent headings and total length are analytic in the
/// arc-length parameter.
struct RoundedRect {
  double hx, hy, radius;

  double straight_x() const { return 2.0 * (hx - radius); }
  double straight_y() const { return 2.0 * (hy - radius); }
  double length() const {
    return 2.0 * straight_x() + 2.0 * straight_y() + 2.0 * kPi * radius;
  }

  Pose2 at(double s) const {
    const double quarter = kPi * radius / 2.0;
    const double sx = straight_x(), sy = straight_y();
    s = std::fmod(s, length());
    if (s < 0.0) s += length();
    // bottom edge, heading +x
    if (s < sx) return {-(hx - radius) + s, -hy, 0.0};
    s -= sx;
    if (s < quarter) return corner(hx - radius, -(hy - radius), -kPi / 2.0, s);
    s -= quarter;
    if (s < sy) return {hx, -(hy - radius) + s, kPi / 2.0};
    s -= sy;
    if (s < quarter) return corner(hx - radius, hy - radius, 0.0, s);
    s -= quarter;
    if (s < sx) return {hx - radius - s, hy, kPi};
    s -= sx;
    if (s < quarter) return corner(-(hx - radius), hy - radius, kPi / 2.0, s);
    s -= quarter;
    if (s < sy) return {-hx, hy - radius - s, -kPi / 2.0};
    s -= sy;
    return corner(-(hx - radius), -(hy - radius), kPi, s);
  }

 private:
  Pose2 corner(double cx, double cy, double start_angle, double s) const {
    const double angle = start_angle + s / radius;
    return {cx + radius * std::cos(angle), cy + radius * std::sin(angle), angle + kPi / 2.0};
  }
};

/// Wall segment sampled as Gaussians every `spacing` along its line.
inline void add_wall(GaussianScene& scene, const Eigen::Vector2d& from, const Eigen::Vector2d& to,
                     double spacing, Rng& rng) {
  const double len = (to - from).norm();
  const int n = std::max(1, static_cast<int>(std::floor(len / spacing)));
  const Eigen::Vector2d dir = (to - from) / len;
  const double heading = std::atan2(dir.y(), dir.x());
  for (int i = 0; i <= n; ++i) {
    Gaussian2D g;
    g.mean = from + dir * (len * i / n);
    g.orient = heading;
    g.scales = {0.3, 0.08};  // elongated along the wall
    g.power_ratio = rng.uniform(0.5, 2.0);
    scene.gaussians.push_back(g);
  }
}

inline void add_rect_walls(GaussianScene& scene, double hx, double hy, double spacing, Rng& rng) {
  const Eigen::Vector2d a{-hx, -hy}, b{hx, -hy}, c{hx, hy}, d{-hx, hy};
  add_wall(scene, a, b, spacing, rng);
  add_wall(scene, b, c, spacing, rng);
  add_wall(scene, c, d, spacing, rng);
  add_wall(scene, d, a, spacing, rng);
}

struct LoopDims {
  double mid_hx, mid_hy;   // corridor midline half-extents
  double corridor_half;    // half-width of the corridor
  double corner_radius;
  int clutter;
};

inline LoopDims loop_dims(SceneKind kind, Rng& rng) {
  const double radius = rng.uniform(1.2, 1.8);
  switch (kind) {
    case SceneKind::Room:
      return {6.5, 1.6, 5.0, radius * 0.5, 24};  // corridor_half unused for rooms
    case SceneKind::SmallLoop:
      return {14.0, 9.0, 2.0, radius, 36};
    default:
      return {21.0, 14.0, 2.0, radius, 56};
  }
}

}  // namespace detail

/// Walls of the scenario geometry sampled every ~0.25 m plus clutter
/// Gaussians, deterministic per seed. Rooms get a single rectangle, loop
/// kinds an annular corridor.
inline GaussianScene make_loop_scene(SceneKind kind, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5ce9e));
  detail::LoopDims dims = detail::loop_dims(kind, rng);
  GaussianScene scene;
  const double spacing = 0.25;
  if (kind == SceneKind::Room) {
    const double hx = dims.mid_hx + 1.5, hy = 4.2;
    detail::add_rect_walls(scene, hx, hy, spacing, rng);
    scene.bounds.min = {-hx - 2.0, -hy - 2.0};
    scene.bounds.max = {hx + 2.0, hy + 2.0};
    for (int i = 0; i < dims.clutter; ++i) {
      Gaussian2D g;
      g.mean = {rng.uniform(-hx + 0.8, hx - 0.8), rng.uniform(-hy + 0.8, hy - 0.8)};
      // keep a lane clear around the scan path
      if (std::abs(g.mean.y()) < 2.4) continue;
      g.orient = rng.uniform(-kPi, kPi);
      g.scales = {rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)};
      g.power_ratio = rng.uniform(0.5, 2.0);
      scene.gaussians.push_back(g);
    }
    return scene;
  }

  const double outer_hx = dims.mid_hx + dims.corridor_half;
  const double outer_hy = dims.mid_hy + dims.corridor_half;
  const double inner_hx = dims.mid_hx - dims.corridor_half;
  const double inner_hy = dims.mid_hy - dims.corridor_half;
  detail::add_rect_walls(scene, outer_hx, outer_hy, spacing, rng);
  detail::add_rect_walls(scene, inner_hx, inner_hy, spacing, rng);
  scene.bounds.min = {-outer_hx - 2.0, -outer_hy - 2.0};
  scene.bounds.max = {outer_hx + 2.0, outer_hy + 2.0};
  // clutter inside the corridor, offset from the midline
  detail::RoundedRect midline{dims.mid_hx, dims.mid_hy, dims.corner_radius};
  const double length = midline.length();
  for (int i = 0; i < dims.clutter; ++i) {
    const Pose2 at = midline.at(rng.uniform(0.0, length));
    const double lateral = rng.uniform(0.9, dims.corridor_half - 0.4);
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Gaussian2D g;
    g.mean = Eigen::Vector2d{at.x, at.y} +
             side * lateral * Eigen::Vector2d{-std::sin(at.yaw), std::cos(at.yaw)};
    g.orient = rng.uniform(-kPi, kPi);
    g.scales = {rng.uniform(0.1, 0.35), rng.uniform(0.1, 0.35)};
    g.power_ratio = rng.uniform(0.5, 2.0);
    scene.gaussians.push_back(g);
  }
  return scene;
}

/// Constant-speed path with yaw tangent to the motion: loop kinds follow the
/// corridor midline (closed within one frame step), rooms run a three-lane
/// back-and-forth scan (non-closed).
inline Trajectory make_trajectory(SceneKind kind, double speed, double frame_rate,
                                  std::uint64_t seed) {
  if (speed <= 0.0 || frame_rate <= 0.0) {
    throw std::invalid_argument("make_trajectory: speed and frame_rate must be > 0");
  }
  Rng rng(mix_seed(seed, 0x5ce9e));  // same stream as the scene: shared corner radius
  detail::LoopDims dims = detail::loop_dims(kind, rng);
  const double step = speed / frame_rate;
  Trajectory traj;

  if (kind == SceneKind::Room) {
    // three stacked lanes joined by half-turns
    const double lane_half = dims.mid_hx - 1.0;
    const double lane_gap = dims.mid_hy;
    const double turn_radius = lane_gap / 2.0;
    struct Piece {
      Pose2 start;
      double len;
      int type;  // 0 straight, 1 left half-turn, 2 right half-turn
    };
    std::vector<Piece> pieces;
    const double turn_len = kPi * turn_radius;
    pieces.push_back({{-lane_half, -lane_gap, 0.0}, 2.0 * lane_half, 0});
    pieces.push_back({{lane_half, -lane_gap, 0.0}, turn_len, 1});
    pieces.push_back({{lane_half, 0.0, kPi}, 2.0 * lane_half, 0});
    pieces.push_back({{-lane_half, 0.0, kPi}, turn_len, 2});
    pieces.push_back({{-lane_half, lane_gap, 0.0}, 2.0 * lane_half, 0});
    double total = 0.0;
    for (const Piece& p : pieces) total += p.len;
    const int n_frames = static_cast<int>(std::floor(total / step)) + 1;
    for (int k = 0; k < n_frames; ++k) {
      double s = std::min(k * step, total);
      Pose2 pose;
      for (const Piece& p : pieces) {
        if (s > p.len) {
          s -= p.len;
          continue;
        }
        if (p.type == 0) {
          const Eigen::Vector2d dir{std::cos(p.start.yaw), std::sin(p.start.yaw)};
          pose = Pose2(p.start.x + s * dir.x(), p.start.y + s * dir.y(), p.start.yaw);
        } else {
          const double sign = p.type == 1 ? 1.0 : -1.0;
          const Eigen::Vector2d normal{-std::sin(p.start.yaw), std::cos(p.start.yaw)};
          const Eigen::Vector2d center =
              Eigen::Vector2d{p.start.x, p.start.y} + sign * turn_radius * normal;
          const double swept = sign * s / turn_radius;
          const double a0 = std::atan2(p.start.y - center.y(), p.start.x - center.x());
          pose = Pose2(center.x() + turn_radius * std::cos(a0 + swept),
                       center.y() + turn_radius * std::sin(a0 + swept),
                       p.start.yaw + swept);
        }
        break;
      }
      traj.push_back({k / frame_rate, pose});
    }
    return traj;
  }

  detail::RoundedRect midline{dims.mid_hx, dims.mid_hy, dims.corner_radius};
  const double length = midline.length();
  const int n_frames = static_cast<int>(std::floor(length / step)) + 1;
  for (int k = 0; k < n_frames; ++k) {
    traj.push_back({k / frame_rate, midline.at(std::fmod(k * step, length))});
  }
  return traj;
}

/// Everything needed to synthesize one sequence deterministically.
struct SimScenario {
  SceneKind kind = SceneKind::SmallLoop;
  std::uint64_t seed = 0;
  double speed = 1.0;        // m/s
  double frame_rate = 10.0;  // Hz
  RadarConfig radar;
  NoiseParams noise;
  int max_doppler_points = 48;
  int cfar_guard = 2;
  int cfar_train = 6;
  double cfar_alpha = 8.0;
  GaussianScene gt_scene;
  GaussianScene measurement_scene;  // jittered copy actually measured
  Trajectory gt_trajectory;

  int n_frames() const { return static_cast<int>(gt_trajectory.size()); }
};

inline SimScenario make_scenario(SceneKind kind, const RadarConfig& radar,
                                 const NoiseParams& noise, std::uint64_t seed,
                                 double speed = 1.0, double frame_rate = 10.0) {
  radar.validate();
  noise.validate();
  SimScenario sc;
  sc.kind = kind;
  sc.seed = seed;
  sc.speed = speed;
  sc.frame_rate = frame_rate;
  sc.radar = radar;
  sc.noise = noise;
  sc.gt_scene = make_loop_scene(kind, seed);
  sc.gt_trajectory = make_trajectory(kind, speed, frame_rate, seed);
  sc.measurement_scene = sc.gt_scene;
  if (noise.scene_jitter > 0.0) {
    Rng rng(mix_seed(seed, 0x01177e7));
    for (Gaussian2D& g : sc.measurement_scene.gaussians) {
      g.mean.x() += rng.normal(0.0, noise.scene_jitter);
      g.mean.y() += rng.normal(0.0, noise.scene_jitter);
    }
  }
  return sc;
}

/// True body-frame velocity at frame k (zero for the first frame).
inline Vel2 true_velocity(const SimScenario& sc, int k) {
  if (k <= 0) return {0.0, 0.0};
  const double dt = sc.gt_trajectory[k].t - sc.gt_trajectory[k - 1].t;
  return ego_velocity_from_poses(sc.gt_trajectory[k].pose, sc.gt_trajectory[k - 1].pose, dt);
}

/// Synthesizes the measurements for frame k: speckled RA, the RD conversion
/// of the noisy RA under the true ego-velocity, gyro with bias and noise, and
/// CFAR-extracted Doppler points. Pure in (scenario, k).
inline RadarFrame synthesize_frame(const SimScenario& sc, int k) {
  if (k < 0 || k >= sc.n_frames()) throw std::out_of_range("synthesize_frame: frame index");
  Rng rng(mix_seed(sc.seed, 0xF00D + static_cast<std::uint64_t>(k)));
  const Pose2& pose = sc.gt_trajectory[k].pose;

  RadarFrame frame;
  frame.timestamp = sc.gt_trajectory[k].t;

  const RaImage clean = render_ra(sc.measurement_scene, pose, sc.radar);
  frame.ra = clean;
  if (sc.noise.speckle > 0.0) {
    for (double& v : frame.ra.data()) {
      v *= 1.0 + sc.noise.speckle * (rng.exponential() - 1.0);
    }
  }
  if (sc.noise.floor_std > 0.0) {
    for (double& v : frame.ra.data()) v += std::max(0.0, rng.normal(0.0, sc.noise.floor_std));
  }

  const Vel2 v_true = true_velocity(sc, k);
  frame.rd = render_rd(frame.ra, render_doppler_map(v_true, sc.radar), sc.radar);

  double gyro_true = 0.0;
  if (k > 0) {
    const double dt = sc.gt_trajectory[k].t - sc.gt_trajectory[k - 1].t;
    gyro_true = wrap_angle(pose.yaw - sc.gt_trajectory[k - 1].pose.yaw) / dt;
  }
  frame.gyro_rate = gyro_true + sc.noise.gyro_bias + rng.normal(0.0, sc.noise.gyro_std);

  // Doppler points from the noiseless image, top-M by power
  auto hits = cfar_detect(clean, sc.cfar_guard, sc.cfar_train, sc.cfar_alpha);
  std::sort(hits.begin(), hits.end(), [&clean](const auto& lhs, const auto& rhs) {
    const double lv = clean(lhs.first, lhs.second), rv = clean(rhs.first, rhs.second);
    if (lv != rv) return lv > rv;
    return lhs < rhs;
  });
  if (static_cast<int>(hits.size()) > sc.max_doppler_points) {
    hits.resize(sc.max_doppler_points);
  }
  Vel2 v_used = v_true;
  if (sc.noise.vel_std > 0.0) {
    v_used.vx += rng.normal(0.0, sc.noise.vel_std);
    v_used.vy += rng.normal(0.0, sc.noise.vel_std);
  }
  const double half_fov = sc.radar.azimuth_fov / 2.0;
  for (const auto& [r, a] : hits) {
    const double range = (r + 0.5) * sc.radar.range_res;
    const double azimuth = -half_fov + a * sc.radar.azimuth_step();
    DopplerPoint p;
    p.pos = {range * std::cos(azimuth), range * std::sin(azimuth)};
    const Eigen::Vector2d dir = p.pos / range;
    p.doppler = kDopplerSign * (dir.x() * v_used.vx + dir.y() * v_used.vy) +
                rng.normal(0.0, sc.noise.doppler_std);
    frame.points.push_back(p);
  }
  return frame;
}

}  // namespace rgs
