#pragma once

#include "rgs/geometry.hpp"
#include "rgs/image.hpp"
#include "rgs/losses.hpp"
#include "rgs/radar_config.hpp"
#include "rgs/scene.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

class NumericalError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Doppler sign convention: positive Doppler is the closing velocity
/// component along the bin direction, matching the per-bin map
/// v_x cos(theta) + v_y sin(theta). Applied uniformly in renderer,
/// simulator and frontend.
inline constexpr double kDopplerSign = 1.0;

inline constexpr double kMinRange = 1e-6;          // m; Gaussians closer are skipped
inline constexpr double kCovRegularization = 1e-8; // added to sigma_polar before inversion
inline constexpr double kFootprintCut = 9.0;       // squared Mahalanobis cutoff (3 sigma)
inline constexpr double kFootprintTaperStart = 6.25;

namespace detail {

/// C2 window rolling each Gaussian's tail smoothly to zero at the 3-sigma
/// cutoff, so footprint truncation never introduces jumps in the rendered
/// image or its gradients.
inline double footprint_taper(double m2) {
  if (m2 <= kFootprintTaperStart) return 1.0;
  if (m2 >= kFootprintCut) return 0.0;
  const double t = (kFootprintCut - m2) / (kFootprintCut - kFootprintTaperStart);
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

inline double footprint_taper_deriv(double m2) {
  if (m2 <= kFootprintTaperStart || m2 >= kFootprintCut) return 0.0;
  const double span = kFootprintCut - kFootprintTaperStart;
  const double t = (kFootprintCut - m2) / span;
  const double tm1 = t - 1.0;
  return -30.0 * t * t * tm1 * tm1 / span;
}

}  // namespace detail

/// Polar-space footprint of a Gaussian seen from a pose.
struct PolarProjection {
  double range = 0.0;
  double azimuth = 0.0;
  Eigen::Matrix2d cov_polar = Eigen::Matrix2d::Zero();
  Eigen::Vector2d sensor_point{0.0, 0.0};
};

/// Projects mean and covariance into (range, azimuth) coordinates via the
/// polar Jacobian at the mean; degenerate (near-sensor) Gaussians yield
/// nullopt.
inline std::optional<PolarProjection> project_to_polar(const Gaussian2D& g, const Pose2& pose) {
  PolarProjection out;
  out.sensor_point = world_to_sensor(g.mean, pose);
  out.range = out.sensor_point.norm();
  if (out.range < kMinRange) return std::nullopt;
  out.azimuth = std::atan2(out.sensor_point.y(), out.sensor_point.x());
  const Eigen::Matrix2d rot_neg = rotation2d(-pose.yaw);
  const Eigen::Matrix2d cov_sensor = rot_neg * covariance(g) * rot_neg.transpose();
  const double c = std::cos(out.azimuth), s = std::sin(out.azimuth);
  Eigen::Matrix2d jac;
  jac << c, s, -s / out.range, c / out.range;
  out.cov_polar = jac * cov_sensor * jac.transpose();
  return out;
}

namespace detail {

/// Per-Gaussian forward cache for one pose.
struct ProjectedGaussian {
  bool active = false;
  double range = 0.0;
  double azimuth = 0.0;
  double amplitude = 0.0;           // power_const * sigma / range^4
  Eigen::Vector2d sensor_point{0.0, 0.0};
  Eigen::Matrix2d cov_world = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d cov_sensor = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d jac = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d precision = Eigen::Matrix2d::Zero();  // inv(cov_polar + eps I)
  int r_lo = 0, r_hi = -1, a_lo = 0, a_hi = -1;
};

inline ProjectedGaussian project_gaussian(const Gaussian2D& g, const Pose2& pose,
                                          const RadarConfig& cfg) {
  ProjectedGaussian pg;
  pg.sensor_point = world_to_sensor(g.mean, pose);
  pg.range = pg.sensor_point.norm();
  if (pg.range < kMinRange) return pg;
  pg.azimuth = std::atan2(pg.sensor_point.y(), pg.sensor_point.x());
  const double r2 = pg.range * pg.range;
  pg.amplitude = cfg.power_const * g.power_ratio / (r2 * r2);

  const Eigen::Matrix2d rot_neg = rotation2d(-pose.yaw);
  pg.cov_world = covariance(g);
  pg.cov_sensor = rot_neg * pg.cov_world * rot_neg.transpose();
  const double c = std::cos(pg.azimuth), s = std::sin(pg.azimuth);
  pg.jac << c, s, -s / pg.range, c / pg.range;
  Eigen::Matrix2d cov_polar = pg.jac * pg.cov_sensor * pg.jac.transpose();
  cov_polar += kCovRegularization * Eigen::Matrix2d::Identity();
  const double det = cov_polar(0, 0) * cov_polar(1, 1) - cov_polar(0, 1) * cov_polar(1, 0);
  if (!(det > 0.0) || !cov_polar.allFinite()) return pg;
  pg.precision << cov_polar(1, 1) / det, -cov_polar(0, 1) / det, -cov_polar(1, 0) / det,
      cov_polar(0, 0) / det;

  // candidate bin windows from the 3-sigma bounding box, one bin of slack
  const double sig_r = std::sqrt(cov_polar(0, 0));
  const double sig_a = std::sqrt(cov_polar(1, 1));
  const double half_fov = cfg.azimuth_fov / 2.0;
  const double r_lo_d = std::floor((pg.range - 3.0 * sig_r) / cfg.range_res - 0.5) - 1.0;
  const double r_hi_d = std::ceil((pg.range + 3.0 * sig_r) / cfg.range_res - 0.5) + 1.0;
  const double a_lo_d = std::floor((pg.azimuth - 3.0 * sig_a + half_fov) / cfg.azimuth_step()) - 1.0;
  const double a_hi_d = std::ceil((pg.azimuth + 3.0 * sig_a + half_fov) / cfg.azimuth_step()) + 1.0;
  if (r_hi_d < 0.0 || r_lo_d > cfg.n_range - 1.0 || a_hi_d < 0.0 || a_lo_d > cfg.n_azimuth - 1.0) {
    return pg;  // footprint entirely outside range span or FOV
  }
  pg.r_lo = static_cast<int>(std::max(0.0, r_lo_d));
  pg.r_hi = static_cast<int>(std::min(static_cast<double>(cfg.n_range - 1), r_hi_d));
  pg.a_lo = static_cast<int>(std::max(0.0, a_lo_d));
  pg.a_hi = static_cast<int>(std::min(static_cast<double>(cfg.n_azimuth - 1), a_hi_d));
  pg.active = true;
  return pg;
}

inline std::vector<ProjectedGaussian> project_all(const GaussianScene& scene, const Pose2& pose,
                                                  const RadarConfig& cfg) {
  std::vector<ProjectedGaussian> out(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    out[i] = project_gaussian(scene.gaussians[i], pose, cfg);
  }
  return out;
}

inline void splat_gaussian(const ProjectedGaussian& pg, const RadarConfig& cfg, RaImage& img) {
  if (!pg.active) return;
  const double half_fov = cfg.azimuth_fov / 2.0;
  const double m00 = pg.precision(0, 0), m01 = pg.precision(0, 1), m11 = pg.precision(1, 1);
  for (int r = pg.r_lo; r <= pg.r_hi; ++r) {
    const double dr = (r + 0.5) * cfg.range_res - pg.range;
    for (int a = pg.a_lo; a <= pg.a_hi; ++a) {
      const double da = wrap_angle(-half_fov + a * cfg.azimuth_step() - pg.azimuth);
      const double m2 = m00 * dr * dr + 2.0 * m01 * dr * da + m11 * da * da;
      if (m2 >= kFootprintCut) continue;
      img(r, a) += pg.amplitude * std::exp(-0.5 * m2) * footprint_taper(m2);
    }
  }
}

}  // namespace detail

/// Additive radar-equation splatting of the scene onto the range-azimuth grid.
inline RaImage render_ra(const GaussianScene& scene, const Pose2& pose, const RadarConfig& cfg) {
  RaImage img(cfg.n_range, cfg.n_azimuth, 0.0);
  for (const Gaussian2D& g : scene.gaussians) {
    detail::splat_gaussian(detail::project_gaussian(g, pose, cfg), cfg, img);
  }
  return img;
}

/// Body-frame velocity of frame k from the pose pair and time delta.
inline Vel2 ego_velocity_from_poses(const Pose2& pose_k, const Pose2& pose_km1, double dt) {
  if (dt <= 0.0) throw std::domain_error("ego_velocity_from_poses: dt must be > 0");
  const Eigen::Vector2d v =
      rotation2d(-pose_k.yaw) * (pose_k.translation() - pose_km1.translation()) / dt;
  return {v.x(), v.y()};
}

/// Doppler velocity of a single Gaussian under the global sign convention.
inline std::optional<double> gaussian_doppler(const Gaussian2D& g, const Pose2& pose,
                                              const Vel2& v) {
  const Eigen::Vector2d p = world_to_sensor(g.mean, pose);
  const double range = p.norm();
  if (range < kMinRange) return std::nullopt;
  return kDopplerSign * (p.x() * v.vx + p.y() * v.vy) / range;
}

/// Expected Doppler per (range, azimuth) bin for a static scene observed at
/// ego-velocity v; every range row is identical.
inline DopplerMap render_doppler_map(const Vel2& v, const RadarConfig& cfg) {
  DopplerMap map(cfg.n_range, cfg.n_azimuth, 0.0);
  const double half_fov = cfg.azimuth_fov / 2.0;
  for (int a = 0; a < cfg.n_azimuth; ++a) {
    const double theta = -half_fov + a * cfg.azimuth_step();
    const double d = kDopplerSign * (v.vx * std::cos(theta) + v.vy * std::sin(theta));
    for (int r = 0; r < cfg.n_range; ++r) map(r, a) = d;
  }
  return map;
}

namespace detail {

/// Contiguous window of the bin_window Doppler bins nearest to value `d`.
inline std::pair<int, int> doppler_bin_window(double d, const RadarConfig& cfg) {
  const int b = std::min(cfg.bin_window, cfg.n_doppler);
  const double c0 = -(cfg.n_doppler - 1) / 2.0 * cfg.doppler_res;
  const double f = (d - c0) / cfg.doppler_res;
  double lo = std::floor(f - (b - 1) / 2.0 + 0.5);
  lo = std::min(std::max(lo, 0.0), static_cast<double>(cfg.n_doppler - b));
  const int lo_i = static_cast<int>(lo);
  return {lo_i, lo_i + b - 1};
}

}  // namespace detail

/// Soft-binned range-Doppler conversion: each (range, azimuth) power sample is
/// spread over the bin_window Doppler bins nearest its Doppler value, weighted
/// by the antenna profile and a Gaussian kernel of bandwidth
/// kernel_sigma_factor * doppler_res.
inline RdImage render_rd(const RaImage& ra, const DopplerMap& dop, const RadarConfig& cfg) {
  if (ra.rows() != cfg.n_range || ra.cols() != cfg.n_azimuth || dop.rows() != ra.rows() ||
      dop.cols() != ra.cols()) {
    throw std::invalid_argument("render_rd: image shapes do not match config");
  }
  RdImage rd(cfg.n_range, cfg.n_doppler, 0.0);
  const double sigma = cfg.kernel_sigma_factor * cfg.doppler_res;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  const double c0 = -(cfg.n_doppler - 1) / 2.0 * cfg.doppler_res;
  for (int r = 0; r < cfg.n_range; ++r) {
    for (int a = 0; a < cfg.n_azimuth; ++a) {
      const double power = cfg.gain_table[a] * ra(r, a);
      if (power == 0.0) continue;
      const double d_val = dop(r, a);
      const auto [d_lo, d_hi] = detail::doppler_bin_window(d_val, cfg);
      for (int d = d_lo; d <= d_hi; ++d) {
        const double diff = d_val - (c0 + d * cfg.doppler_res);
        rd(r, d) += power * std::exp(-diff * diff * inv_two_sigma2);
      }
    }
  }
  return rd;
}

/// Partial derivatives of a scalar loss w.r.t. window poses and scene
/// parameters.
struct PoseGradient {
  double x = 0.0, y = 0.0, yaw = 0.0;
};

struct GaussianGradient {
  Eigen::Vector2d mean{0.0, 0.0};
  double orient = 0.0;
  Eigen::Vector2d scales{0.0, 0.0};
  double power = 0.0;
};

struct GradientBundle {
  std::vector<PoseGradient> poses;        // one per window keyframe
  std::vector<GaussianGradient> gaussians;  // one per scene Gaussian (if requested)
};

/// One keyframe's measurements inside an optimization window. The Doppler
/// term needs the predecessor pose: prev_index points into the window when
/// the predecessor is itself optimized, otherwise prev_pose is a constant.
/// dt <= 0 or a missing RD image disables the Doppler term (first keyframe).
struct KeyframeObservation {
  Pose2 pose;
  Pose2 prev_pose;
  int prev_index = -1;
  double dt = 0.0;
  const RaImage* measured_ra = nullptr;
  const RdImage* measured_rd = nullptr;
  bool optimize_pose = true;
};

enum class GradGroups { Poses, Gaussians, Both };

struct LossSpec {
  GradGroups groups = GradGroups::Both;
  bool use_rd = true;
  LossWeights weights;
};

struct WindowLoss {
  double loss = 0.0;
  GradientBundle grads;
};

namespace detail {

inline const Eigen::Matrix2d kSkew = [] {
  Eigen::Matrix2d w;
  w << 0.0, -1.0, 1.0, 0.0;
  return w;
}();

/// Backward pass of render_rd and the Doppler map; accumulates into the RA
/// adjoint and returns the velocity adjoint.
inline Eigen::Vector2d backward_rd(const RaImage& ra, const DopplerMap& dop,
                                   const RdImage& rd_bar, const RadarConfig& cfg,
                                   RaImage& ra_bar) {
  const double sigma = cfg.kernel_sigma_factor * cfg.doppler_res;
  const double inv_sigma2 = 1.0 / (sigma * sigma);
  const double c0 = -(cfg.n_doppler - 1) / 2.0 * cfg.doppler_res;
  const double half_fov = cfg.azimuth_fov / 2.0;
  Eigen::Vector2d v_bar = Eigen::Vector2d::Zero();
  for (int a = 0; a < cfg.n_azimuth; ++a) {
    const double gain = cfg.gain_table[a];
    if (gain == 0.0) continue;
    const double theta = -half_fov + a * cfg.azimuth_step();
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int r = 0; r < cfg.n_range; ++r) {
      const double d_val = dop(r, a);
      const auto [d_lo, d_hi] = doppler_bin_window(d_val, cfg);
      double pixel_bar = 0.0;
      double d_bar = 0.0;
      for (int d = d_lo; d <= d_hi; ++d) {
        const double up = rd_bar(r, d);
        if (up == 0.0) continue;
        const double diff = d_val - (c0 + d * cfg.doppler_res);
        const double kernel = std::exp(-0.5 * diff * diff * inv_sigma2);
        pixel_bar += up * gain * kernel;
        d_bar += up * gain * ra(r, a) * kernel * (-diff * inv_sigma2);
      }
      ra_bar(r, a) += pixel_bar;
      v_bar.x() += d_bar * kDopplerSign * ct;
      v_bar.y() += d_bar * kDopplerSign * st;
    }
  }
  return v_bar;
}

/// Backward pass of render_ra for one Gaussian; accumulates parameter and
/// pose adjoints from the image adjoint ra_bar.
inline void backward_gaussian(const ProjectedGaussian& pg, const Gaussian2D& g, const Pose2& pose,
                              const RadarConfig& cfg, const RaImage& ra_bar, bool want_pose,
                              bool want_gaussians, PoseGradient* pose_grad,
                              GaussianGradient* gauss_grad) {
  if (!pg.active) return;
  const double half_fov = cfg.azimuth_fov / 2.0;
  const double m00 = pg.precision(0, 0), m01 = pg.precision(0, 1), m11 = pg.precision(1, 1);

  double amp_bar = 0.0, range_bar = 0.0, azimuth_bar = 0.0;
  Eigen::Matrix2d prec_bar = Eigen::Matrix2d::Zero();
  for (int r = pg.r_lo; r <= pg.r_hi; ++r) {
    const double dr = (r + 0.5) * cfg.range_res - pg.range;
    for (int a = pg.a_lo; a <= pg.a_hi; ++a) {
      const double up = ra_bar(r, a);
      if (up == 0.0) continue;
      const double da = wrap_angle(-half_fov + a * cfg.azimuth_step() - pg.azimuth);
      const double m2 = m00 * dr * dr + 2.0 * m01 * dr * da + m11 * da * da;
      if (m2 >= kFootprintCut) continue;
      const double gauss = std::exp(-0.5 * m2);
      const double taper = footprint_taper(m2);
      amp_bar += up * gauss * taper;
      const double m2_bar =
          up * pg.amplitude * gauss * (footprint_taper_deriv(m2) - 0.5 * taper);
      const double dr_bar = 2.0 * m2_bar * (m00 * dr + m01 * da);
      const double da_bar = 2.0 * m2_bar * (m01 * dr + m11 * da);
      prec_bar(0, 0) += m2_bar * dr * dr;
      prec_bar(0, 1) += m2_bar * dr * da;
      prec_bar(1, 0) += m2_bar * dr * da;
      prec_bar(1, 1) += m2_bar * da * da;
      range_bar -= dr_bar;
      azimuth_bar -= da_bar;
    }
  }
  if (amp_bar == 0.0 && range_bar == 0.0 && azimuth_bar == 0.0 && prec_bar.isZero(0.0)) return;

  const double range = pg.range;
  const double r2 = range * range;
  const double sigma_bar = amp_bar * cfg.power_const / (r2 * r2);
  range_bar += amp_bar * (-4.0 * pg.amplitude / range);

  // precision = inv(cov_polar + eps I)
  const Eigen::Matrix2d cov_polar_bar = -(pg.precision * prec_bar * pg.precision);
  // cov_polar = J cov_sensor J^T
  const Eigen::Matrix2d cov_sensor_bar = pg.jac.transpose() * cov_polar_bar * pg.jac;
  const Eigen::Matrix2d jac_bar = 2.0 * cov_polar_bar * pg.jac * pg.cov_sensor;
  const double c = std::cos(pg.azimuth), s = std::sin(pg.azimuth);
  Eigen::Matrix2d djac_drange, djac_dazimuth;
  djac_drange << 0.0, 0.0, s / r2, -c / r2;
  djac_dazimuth << -s, c, -c / range, -s / range;
  range_bar += jac_bar.cwiseProduct(djac_drange).sum();
  azimuth_bar += jac_bar.cwiseProduct(djac_dazimuth).sum();

  // cov_sensor = Rot(-yaw) cov_world Rot(-yaw)^T
  const Eigen::Matrix2d rot_neg = rotation2d(-pose.yaw);
  double yaw_bar = 0.0;
  if (want_pose) {
    const Eigen::Matrix2d dcov_dyaw = -kSkew * pg.cov_sensor + pg.cov_sensor * kSkew;
    yaw_bar += cov_sensor_bar.cwiseProduct(dcov_dyaw).sum();
  }

  // (range, azimuth) from the sensor-frame point
  const Eigen::Vector2d p_bar =
      range_bar * Eigen::Vector2d(c, s) +
      azimuth_bar * Eigen::Vector2d(-s / range, c / range);

  if (want_pose && pose_grad != nullptr) {
    const Eigen::Vector2d t_bar = -(rot_neg.transpose() * p_bar);
    pose_grad->x += t_bar.x();
    pose_grad->y += t_bar.y();
    yaw_bar += p_bar.x() * pg.sensor_point.y() - p_bar.y() * pg.sensor_point.x();
    pose_grad->yaw += yaw_bar;
  }

  if (want_gaussians && gauss_grad != nullptr) {
    const Eigen::Matrix2d cov_world_bar = rot_neg.transpose() * cov_sensor_bar * rot_neg;
    const Eigen::Matrix2d rot_g = rotation2d(g.orient);
    const Eigen::Matrix2d dcov_dorient = kSkew * pg.cov_world - pg.cov_world * kSkew;
    gauss_grad->orient += cov_world_bar.cwiseProduct(dcov_dorient).sum();
    const Eigen::Vector2d u1 = rot_g.col(0), u2 = rot_g.col(1);
    gauss_grad->scales.x() += 2.0 * g.scales.x() * u1.dot(cov_world_bar * u1);
    gauss_grad->scales.y() += 2.0 * g.scales.y() * u2.dot(cov_world_bar * u2);
    gauss_grad->power += sigma_bar;
    gauss_grad->mean += rot_neg.transpose() * p_bar;
  }
}

inline void check_finite(double v, const std::string& name) {
  if (!std::isfinite(v)) throw NumericalError("non-finite gradient for " + name);
}

}  // namespace detail

/// Window loss (RA + optional RD image losses) with analytic gradients w.r.t.
/// the requested parameter groups, including the dependence of each
/// keyframe's velocity on its own and its predecessor's pose.
inline WindowLoss render_with_grads(const GaussianScene& scene,
                                    std::span<const KeyframeObservation> window,
                                    const RadarConfig& cfg, const LossSpec& spec) {
  if (window.empty()) throw std::invalid_argument("render_with_grads: empty window");
  const bool want_pose = spec.groups != GradGroups::Gaussians;
  const bool want_gaussians = spec.groups != GradGroups::Poses;

  WindowLoss out;
  out.grads.poses.assign(window.size(), PoseGradient{});
  out.grads.gaussians.assign(want_gaussians ? scene.size() : 0, GaussianGradient{});

  for (std::size_t k = 0; k < window.size(); ++k) {
    const KeyframeObservation& obs = window[k];
    if (obs.measured_ra == nullptr) {
      throw std::invalid_argument("render_with_grads: keyframe missing measured RA image");
    }
    const auto projections = detail::project_all(scene, obs.pose, cfg);
    RaImage ra_hat(cfg.n_range, cfg.n_azimuth, 0.0);
    for (const auto& pg : projections) detail::splat_gaussian(pg, cfg, ra_hat);

    auto ra_term = image_loss_with_grad(ra_hat, *obs.measured_ra, spec.weights);
    out.loss += ra_term.loss;
    RaImage ra_bar = std::move(ra_term.grad);

    const bool rd_active = spec.use_rd && obs.dt > 0.0 && obs.measured_rd != nullptr;
    if (rd_active) {
      const Pose2 prev =
          obs.prev_index >= 0 ? window[static_cast<std::size_t>(obs.prev_index)].pose
                              : obs.prev_pose;
      const Vel2 vel = ego_velocity_from_poses(obs.pose, prev, obs.dt);
      const DopplerMap dop = render_doppler_map(vel, cfg);
      const RdImage rd_hat = render_rd(ra_hat, dop, cfg);
      auto rd_term = image_loss_with_grad(rd_hat, *obs.measured_rd, spec.weights);
      out.loss += spec.weights.rd_weight * rd_term.loss;
      if (spec.weights.rd_weight != 0.0) {
        for (double& v : rd_term.grad.data()) v *= spec.weights.rd_weight;
        const Eigen::Vector2d v_bar =
            detail::backward_rd(ra_hat, dop, rd_term.grad, cfg, ra_bar);
        if (want_pose) {
          const Eigen::Matrix2d rot = rotation2d(obs.pose.yaw);
          const Eigen::Vector2d t_bar = rot * v_bar / obs.dt;
          const double yaw_bar = v_bar.x() * vel.vy - v_bar.y() * vel.vx;
          if (obs.optimize_pose) {
            out.grads.poses[k].x += t_bar.x();
            out.grads.poses[k].y += t_bar.y();
            out.grads.poses[k].yaw += yaw_bar;
          }
          if (obs.prev_index >= 0 &&
              window[static_cast<std::size_t>(obs.prev_index)].optimize_pose) {
            auto& prev_grad = out.grads.poses[static_cast<std::size_t>(obs.prev_index)];
            prev_grad.x -= t_bar.x();
            prev_grad.y -= t_bar.y();
          }
        }
      }
    }

    const bool pose_here = want_pose && obs.optimize_pose;
    if (pose_here || want_gaussians) {
      for (std::size_t i = 0; i < scene.size(); ++i) {
        detail::backward_gaussian(projections[i], scene.gaussians[i], obs.pose, cfg, ra_bar,
                                  pose_here, want_gaussians,
                                  pose_here ? &out.grads.poses[k] : nullptr,
                                  want_gaussians ? &out.grads.gaussians[i] : nullptr);
      }
    }
  }

  if (!std::isfinite(out.loss)) throw NumericalError("non-finite loss");
  for (std::size_t k = 0; k < out.grads.poses.size(); ++k) {
    const auto& p = out.grads.poses[k];
    detail::check_finite(p.x, "pose[" + std::to_string(k) + "].x");
    detail::check_finite(p.y, "pose[" + std::to_string(k) + "].y");
    detail::check_finite(p.yaw, "pose[" + std::to_string(k) + "].yaw");
  }
  for (std::size_t i = 0; i < out.grads.gaussians.size(); ++i) {
    const auto& g = out.grads.gaussians[i];
    const std::string name = "gaussian[" + std::to_string(i) + "]";
    detail::check_finite(g.mean.x(), name + ".mean.x");
    detail::check_finite(g.mean.y(), name + ".mean.y");
    detail::check_finite(g.orient, name + ".orient");
    detail::check_finite(g.scales.x(), name + ".scales.x");
    detail::check_finite(g.scales.y(), name + ".scales.y");
    detail::check_finite(g.power, name + ".power");
  }
  return out;
}

}  // namespace rgs
