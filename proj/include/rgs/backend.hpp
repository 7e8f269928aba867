#pragma once

#include "rgs/adam.hpp"
#include "rgs/frontend.hpp"
#include "rgs/geometry.hpp"
#include "rgs/losses.hpp"
#include "rgs/radar_config.hpp"
#include "rgs/renderer.hpp"
#include "rgs/scene.hpp"
#include "rgs/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

/// Per-group Adam step sizes and iteration budgets for the three stages.
struct OptimizerConfig {
  double lr_pose_xy = 1e-2;   // m/step
  double lr_pose_yaw = 5e-3;  // rad/step
  double lr_mean = 1e-2;
  double lr_orient = 1e-3;
  double lr_scale = 5e-3;
  double lr_power = 5e-2;
  int iters_pose = 50;
  int iters_map = 100;
  int iters_ba = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    for (double v : {lr_pose_xy, lr_pose_yaw, lr_mean, lr_orient, lr_scale, lr_power}) {
      if (v <= 0.0) throw std::invalid_argument("OptimizerConfig: learning rates must be > 0");
    }
    if (iters_pose <= 0 || iters_map <= 0 || iters_ba <= 0) {
      throw std::invalid_argument("OptimizerConfig: iteration counts must be > 0");
    }
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
      throw std::invalid_argument("OptimizerConfig: betas must be in (0, 1)");
    }
    if (adam_eps <= 0.0) throw std::invalid_argument("OptimizerConfig: adam_eps must be > 0");
  }
};

enum class WindowKind { Radius, Sliding };

struct WindowSpec {
  WindowKind kind = WindowKind::Radius;
  double r_ba = 10.0;   // m
  int n_sliding = 10;

  void validate() const {
    if (r_ba <= 0.0) throw std::invalid_argument("WindowSpec: r_ba must be > 0");
    if (n_sliding < 1) throw std::invalid_argument("WindowSpec: n_sliding must be >= 1");
  }
};

struct Keyframe {
  int id = 0;
  double timestamp = 0.0;
  Pose2 pose;
  Vel2 velocity;        // body frame, derived from (pose, previous pose, dt_prev)
  double dt_prev = 0.0; // s since the previous keyframe; 0 for keyframe 0
  int frame_index = 0;  // index into the session's stored keyframe measurements
};

inline bool should_create_keyframe(const Pose2& last_kf, const Pose2& current, double tau_t = 0.5,
                                   double tau_r = 10.0 * kPi / 180.0) {
  const double trans = (current.translation() - last_kf.translation()).norm();
  const double rot = std::abs(wrap_angle(current.yaw - last_kf.yaw));
  return trans >= tau_t || rot >= tau_r;
}

/// Radius windows gather the keyframes within r_ba of the newest pose (loop
/// re-entries included); sliding windows take the most recent N.
inline std::vector<std::size_t> select_window(const std::vector<Keyframe>& store,
                                              std::size_t newest_index, const WindowSpec& spec) {
  if (newest_index >= store.size()) {
    throw std::invalid_argument("select_window: newest index out of range");
  }
  std::vector<std::size_t> out;
  if (spec.kind == WindowKind::Sliding) {
    const std::size_t n = std::min<std::size_t>(spec.n_sliding, newest_index + 1);
    for (std::size_t i = newest_index + 1 - n; i <= newest_index; ++i) out.push_back(i);
    return out;
  }
  const Eigen::Vector2d center = store[newest_index].pose.translation();
  for (std::size_t i = 0; i <= newest_index; ++i) {
    if ((store[i].pose.translation() - center).norm() <= spec.r_ba) out.push_back(i);
  }
  return out;
}

namespace detail {

/// Indices of Gaussians close enough to any window pose to possibly render.
inline std::vector<std::size_t> visible_subset(const GaussianScene& scene,
                                               std::span<const Pose2> poses,
                                               const RadarConfig& cfg, double margin) {
  std::vector<std::size_t> idx;
  const double reach = cfg.max_range() + margin;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (const Pose2& p : poses) {
      if ((scene.gaussians[i].mean - p.translation()).norm() <= reach) {
        idx.push_back(i);
        break;
      }
    }
  }
  return idx;
}

struct GaussianParamPack {
  static constexpr std::size_t kPerGaussian = 6;

  static void pack(const Gaussian2D& g, double* out) {
    out[0] = g.mean.x();
    out[1] = g.mean.y();
    out[2] = g.orient;
    out[3] = g.scales.x();
    out[4] = g.scales.y();
    out[5] = g.power_ratio;
  }

  static void unpack(const double* in, const SceneLimits& limits, Gaussian2D& g) {
    g.mean = {in[0], in[1]};
    g.orient = wrap_angle(in[2]);
    g.scales.x() = std::clamp(in[3], limits.s_min, limits.s_max);
    g.scales.y() = std::clamp(in[4], limits.s_min, limits.s_max);
    g.power_ratio = std::max(0.0, in[5]);
  }

  static void lr(const OptimizerConfig& opt, double* out) {
    out[0] = opt.lr_mean;
    out[1] = opt.lr_mean;
    out[2] = opt.lr_orient;
    out[3] = opt.lr_scale;
    out[4] = opt.lr_scale;
    out[5] = opt.lr_power;
  }
};

}  // namespace detail

struct RefineResult {
  Pose2 pose;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> iteration_losses;
  std::string diagnostic;  // non-empty when the optimization aborted
};

/// Gradient refinement of the newest keyframe pose against the current scene;
/// the RD term recomputes the keyframe velocity from the evolving pose every
/// step. Returns the best pose seen across iterations.
inline RefineResult refine_pose(const KeyframeObservation& newest, const GaussianScene& scene,
                                const RadarConfig& cfg, const LossWeights& weights,
                                const OptimizerConfig& opt, bool use_rd = true,
                                const SceneLimits& limits = {}) {
  RefineResult result;
  result.pose = newest.pose;
  if (scene.empty()) return result;  // loss is constant in the pose

  LossSpec spec;
  spec.groups = GradGroups::Poses;
  spec.use_rd = use_rd;
  spec.weights = weights;

  std::vector<KeyframeObservation> window{newest};
  window[0].optimize_pose = true;
  window[0].prev_index = -1;

  // render only the Gaussians that can contribute at this pose
  GaussianScene local;
  local.bounds = scene.bounds;
  const Pose2 pose_arr[1] = {newest.pose};
  for (std::size_t i : detail::visible_subset(scene, pose_arr, cfg, 3.0 * limits.s_max + 2.0)) {
    local.gaussians.push_back(scene.gaussians[i]);
  }
  if (local.empty()) return result;

  AdamOptimizer adam(3, opt.adam_beta1, opt.adam_beta2, opt.adam_eps);
  const double lr[3] = {opt.lr_pose_xy, opt.lr_pose_xy, opt.lr_pose_yaw};
  double best_loss = std::numeric_limits<double>::infinity();
  Pose2 best_pose = newest.pose;

  for (int iter = 0; iter <= opt.iters_pose; ++iter) {
    WindowLoss eval;
    try {
      eval = render_with_grads(local, window, cfg, spec);
    } catch (const NumericalError& e) {
      result.diagnostic = e.what();
      result.pose = newest.pose;
      return result;
    }
    result.iteration_losses.push_back(eval.loss);
    if (iter == 0) result.initial_loss = eval.loss;
    if (eval.loss < best_loss) {
      best_loss = eval.loss;
      best_pose = window[0].pose;
    }
    if (iter == opt.iters_pose) break;
    double params[3] = {window[0].pose.x, window[0].pose.y, window[0].pose.yaw};
    const double grad[3] = {eval.grads.poses[0].x, eval.grads.poses[0].y,
                            eval.grads.poses[0].yaw};
    adam.step(grad, lr, params);
    window[0].pose = Pose2(params[0], params[1], params[2]);
  }
  result.pose = best_pose;
  result.final_loss = best_loss;
  return result;
}

/// Optional densify pass applied by update_map after optimization.
struct MapUpkeep {
  bool densify_now = false;
  double tau_d = 0.0;
  const RaImage* frame_ra = nullptr;  // newest measured frame
  Pose2 pose;                         // its (refined) pose
};

struct MapResult {
  GaussianScene scene;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> iteration_losses;
  std::string diagnostic;
};

struct BaResult {
  std::vector<Pose2> poses;  // one per window keyframe
  GaussianScene scene;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> iteration_losses;
  std::string diagnostic;
};

namespace detail {

/// Shared optimization driver for the map (Gaussians only) and BA
/// (poses + Gaussians) stages. Tracks the best iterate and restores it.
inline BaResult optimize_window(std::vector<KeyframeObservation> window,
                                const GaussianScene& scene, const RadarConfig& cfg,
                                const LossWeights& weights, const OptimizerConfig& opt,
                                const SceneLimits& limits, bool optimize_poses, bool use_rd,
                                int iters) {
  BaResult result;
  result.scene = scene;
  result.poses.reserve(window.size());
  for (const auto& obs : window) result.poses.push_back(obs.pose);

  std::vector<Pose2> pose_snapshot(window.size());
  for (std::size_t k = 0; k < window.size(); ++k) pose_snapshot[k] = window[k].pose;

  LossSpec spec;
  spec.groups = optimize_poses ? GradGroups::Both : GradGroups::Gaussians;
  spec.use_rd = use_rd;
  spec.weights = weights;

  std::vector<Pose2> all_poses = pose_snapshot;
  const auto subset = visible_subset(scene, all_poses, cfg, 3.0 * limits.s_max + 2.0);
  GaussianScene local;
  local.bounds = scene.bounds;
  for (std::size_t i : subset) local.gaussians.push_back(scene.gaussians[i]);

  std::vector<std::size_t> pose_params;  // window indices with optimizable poses
  if (optimize_poses) {
    for (std::size_t k = 0; k < window.size(); ++k) {
      if (window[k].optimize_pose) pose_params.push_back(k);
    }
  } else {
    for (auto& obs : window) obs.optimize_pose = false;
  }

  const std::size_t n_pose = 3 * pose_params.size();
  const std::size_t n_gauss = GaussianParamPack::kPerGaussian * local.size();
  const std::size_t n_params = n_pose + n_gauss;
  if (n_params == 0) {
    const double reg = weights.lambda_sigma * scale_reg(result.scene, weights.scale_limit);
    result.initial_loss = result.final_loss = reg;
    return result;
  }

  std::vector<double> params(n_params), lr(n_params), grad(n_params);
  for (std::size_t p = 0; p < pose_params.size(); ++p) {
    const Pose2& pose = window[pose_params[p]].pose;
    params[3 * p] = pose.x;
    params[3 * p + 1] = pose.y;
    params[3 * p + 2] = pose.yaw;
    lr[3 * p] = opt.lr_pose_xy;
    lr[3 * p + 1] = opt.lr_pose_xy;
    lr[3 * p + 2] = opt.lr_pose_yaw;
  }
  for (std::size_t i = 0; i < local.size(); ++i) {
    GaussianParamPack::pack(local.gaussians[i], &params[n_pose + 6 * i]);
    GaussianParamPack::lr(opt, &lr[n_pose + 6 * i]);
  }

  AdamOptimizer adam(n_params, opt.adam_beta1, opt.adam_beta2, opt.adam_eps);
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = params;

  // the regularizer averages over the full scene; only local entries move,
  // the rest contribute a constant
  const double n_scene = scene.empty() ? 1.0 : static_cast<double>(scene.size());
  double reg_rest = 0.0;
  {
    std::vector<bool> in_subset(scene.size(), false);
    for (std::size_t i : subset) in_subset[i] = true;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      if (in_subset[i]) continue;
      const double excess =
          std::max(0.0, scene.gaussians[i].scales.maxCoeff() - weights.scale_limit);
      reg_rest += excess * excess;
    }
  }
  auto reg_loss_grad = [&](std::vector<double>& g_out) {
    double sum = reg_rest;
    for (std::size_t i = 0; i < local.size(); ++i) {
      const Eigen::Vector2d& s = local.gaussians[i].scales;
      const int arg = s.x() >= s.y() ? 0 : 1;
      const double excess = s[arg] - weights.scale_limit;
      if (excess > 0.0) {
        sum += excess * excess;
        g_out[n_pose + 6 * i + 3 + arg] += weights.lambda_sigma * 2.0 * excess / n_scene;
      }
    }
    return weights.lambda_sigma * sum / n_scene;
  };

  for (int iter = 0; iter <= iters; ++iter) {
    WindowLoss eval;
    try {
      eval = render_with_grads(local, window, cfg, spec);
    } catch (const NumericalError& e) {
      result.diagnostic = e.what();
      break;
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    if (optimize_poses) {
      for (std::size_t p = 0; p < pose_params.size(); ++p) {
        const auto& pg = eval.grads.poses[pose_params[p]];
        grad[3 * p] = pg.x;
        grad[3 * p + 1] = pg.y;
        grad[3 * p + 2] = pg.yaw;
      }
    }
    for (std::size_t i = 0; i < local.size(); ++i) {
      const auto& gg = eval.grads.gaussians[i];
      double* g = &grad[n_pose + 6 * i];
      g[0] = gg.mean.x();
      g[1] = gg.mean.y();
      g[2] = gg.orient;
      g[3] = gg.scales.x();
      g[4] = gg.scales.y();
      g[5] = gg.power;
    }
    const double loss = eval.loss + reg_loss_grad(grad);
    result.iteration_losses.push_back(loss);
    if (iter == 0) result.initial_loss = loss;
    if (loss < best_loss) {
      best_loss = loss;
      best_params = params;
    }
    if (iter == iters) break;
    adam.step(grad, lr, params);
    for (std::size_t p = 0; p < pose_params.size(); ++p) {
      window[pose_params[p]].pose = Pose2(params[3 * p], params[3 * p + 1], params[3 * p + 2]);
      params[3 * p + 2] = window[pose_params[p]].pose.yaw;
    }
    for (std::size_t i = 0; i < local.size(); ++i) {
      GaussianParamPack::unpack(&params[n_pose + 6 * i], limits, local.gaussians[i]);
      GaussianParamPack::pack(local.gaussians[i], &params[n_pose + 6 * i]);
    }
  }

  // restore the best iterate
  for (std::size_t p = 0; p < pose_params.size(); ++p) {
    result.poses[pose_params[p]] =
        Pose2(best_params[3 * p], best_params[3 * p + 1], best_params[3 * p + 2]);
  }
  for (std::size_t i = 0; i < local.size(); ++i) {
    GaussianParamPack::unpack(&best_params[n_pose + 6 * i], limits,
                              result.scene.gaussians[subset[i]]);
  }
  result.final_loss = std::isfinite(best_loss) ? best_loss : result.initial_loss;
  return result;
}

}  // namespace detail

/// Mapping stage: optimizes Gaussian parameters only (poses frozen) against
/// the RA geometry loss plus the scale regularizer, then applies
/// densify/prune per the scene lifecycle policy.
inline MapResult update_map(std::span<const KeyframeObservation> window,
                            const GaussianScene& scene, const RadarConfig& cfg,
                            const LossWeights& weights, const OptimizerConfig& opt,
                            const SceneLimits& limits, const MapUpkeep* upkeep = nullptr) {
  if (window.empty()) throw std::invalid_argument("update_map: empty window");
  std::vector<KeyframeObservation> obs(window.begin(), window.end());
  auto ba = detail::optimize_window(std::move(obs), scene, cfg, weights, opt, limits,
                                    /*optimize_poses=*/false, /*use_rd=*/false, opt.iters_map);
  MapResult result;
  result.scene = std::move(ba.scene);
  result.initial_loss = ba.initial_loss;
  result.final_loss = ba.final_loss;
  result.iteration_losses = std::move(ba.iteration_losses);
  result.diagnostic = std::move(ba.diagnostic);

  if (upkeep != nullptr && upkeep->densify_now && upkeep->frame_ra != nullptr) {
    const RaImage rendered = render_ra(result.scene, upkeep->pose, cfg);
    result.scene = densify(result.scene, *upkeep->frame_ra, rendered, upkeep->pose, cfg,
                           upkeep->tau_d, limits);
  }
  result.scene = prune(result.scene, limits.prune_threshold);
  return result;
}

/// Bundle adjustment: joint optimization of all window poses (except
/// gauge-fixed ones) and the visible scene subset against RA + RD losses and
/// the scale regularizer.
inline BaResult bundle_adjust(std::span<const KeyframeObservation> window,
                              const GaussianScene& scene, const RadarConfig& cfg,
                              const LossWeights& weights, const OptimizerConfig& opt,
                              const SceneLimits& limits, bool use_rd = true) {
  if (window.empty()) throw std::invalid_argument("bundle_adjust: empty window");
  std::vector<KeyframeObservation> obs(window.begin(), window.end());
  return detail::optimize_window(std::move(obs), scene, cfg, weights, opt, limits,
                                 /*optimize_poses=*/true, use_rd, opt.iters_ba);
}

/// Pipeline switches for the ablation modes.
struct BackendOptions {
  OptimizerConfig opt;
  LossWeights weights;
  WindowSpec ba_window;         // radius window by default
  int map_window = 10;          // sliding-window size for mapping
  double kf_translation = 0.5;  // m
  double kf_rotation = 10.0 * kPi / 180.0;
  int kf_every_frames = 5;      // keyframe cadence fallback without frontend init
  SceneLimits limits;
  Bounds world_bounds;
  double tau_init_factor = 5.0;  // init threshold, multiple of the noise floor
  double tau_d_factor = 3.0;     // densify threshold, multiple of the noise floor
  bool enable_backend = true;
  bool enable_ba = true;
  bool frontend_init = true;
  bool use_rd = true;
};

struct LossLogRow {
  int frame_id = 0;
  std::string stage;
  int iteration = 0;
  double loss = 0.0;
};

/// One odometry run: consumes frames in timestamp order, maintains keyframes,
/// the Gaussian scene and the per-frame trajectory. Single-threaded.
class OdometrySession {
 public:
  OdometrySession(RadarConfig cfg, BackendOptions opts)
      : cfg_(std::move(cfg)), opts_(std::move(opts)) {
    cfg_.validate();
    opts_.opt.validate();
    opts_.ba_window.validate();
    opts_.weights.validate();
    scene_.bounds = opts_.world_bounds;
  }

  void process_frame(const RadarFrame& frame) {
    if (first_) {
      init_first_frame(frame);
      return;
    }
    const double dt = frame.timestamp - last_time_;
    if (dt <= 0.0) throw std::invalid_argument("process_frame: timestamps must increase");
    last_time_ = frame.timestamp;
    ++frame_count_;

    Pose2 predicted = current_pose_;
    if (opts_.frontend_init) {
      if (frame.points.size() >= 2) {
        try {
          last_velocity_ = ego_velocity_lsq(frame.points).velocity;
        } catch (const DegenerateGeometryError&) {
          // keep the previous velocity estimate
        }
      }
      predicted = dead_reckon(current_pose_, last_velocity_,
                              GyroSample{frame.gyro_rate, frame.timestamp}, dt);
    }

    const Keyframe& last_kf = keyframes_.back();
    const bool make_kf =
        opts_.frontend_init
            ? should_create_keyframe(last_kf.pose, predicted, opts_.kf_translation,
                                     opts_.kf_rotation)
            : (frame_count_ - last_kf_frame_count_) >= opts_.kf_every_frames;

    if (!make_kf || !opts_.enable_backend) {
      current_pose_ = predicted;
      if (opts_.enable_backend) {
        records_.push_back({frame.timestamp, last_kf.id,
                            pose_compose(pose_inverse(last_kf.pose), predicted)});
      } else {
        records_.push_back({frame.timestamp, -1, predicted});
      }
      return;
    }
    create_keyframe(frame, predicted, dt);
  }

  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  const GaussianScene& scene() const { return scene_; }
  const std::vector<LossLogRow>& loss_log() const { return loss_log_; }
  const RadarConfig& config() const { return cfg_; }

  /// Final per-frame trajectory; frames between keyframes ride on their
  /// anchor keyframe's optimized pose.
  Trajectory trajectory() const {
    Trajectory out;
    out.reserve(records_.size());
    for (const FrameRecord& rec : records_) {
      if (rec.anchor < 0) {
        out.push_back({rec.t, rec.rel});
      } else {
        out.push_back({rec.t, pose_compose(keyframes_[rec.anchor].pose, rec.rel)});
      }
    }
    return out;
  }

  Trajectory keyframe_trajectory() const {
    Trajectory out;
    out.reserve(keyframes_.size());
    for (const Keyframe& kf : keyframes_) out.push_back({kf.timestamp, kf.pose});
    return out;
  }

 private:
  struct FrameRecord {
    double t = 0.0;
    int anchor = -1;  // keyframe id, or -1 for an absolute pose
    Pose2 rel;
  };

  void init_first_frame(const RadarFrame& frame) {
    first_ = false;
    last_time_ = frame.timestamp;
    current_pose_ = Pose2();  // gauge origin
    Keyframe kf;
    kf.id = 0;
    kf.timestamp = frame.timestamp;
    kf.pose = current_pose_;
    kf.frame_index = 0;
    keyframes_.push_back(kf);
    kf_frames_.push_back(frame);
    last_kf_frame_count_ = 0;
    if (opts_.enable_backend) {
      scene_ = init_from_frame(frame.ra, kf.pose, cfg_,
                               opts_.tau_init_factor * cfg_.noise_floor, opts_.limits,
                               opts_.world_bounds);
    }
    records_.push_back({frame.timestamp, opts_.enable_backend ? 0 : -1, Pose2()});
  }

  KeyframeObservation observation_for(const Keyframe& kf, int prev_index_in_window) const {
    KeyframeObservation obs;
    obs.pose = kf.pose;
    obs.dt = kf.dt_prev;
    obs.prev_index = prev_index_in_window;
    if (kf.id > 0) obs.prev_pose = keyframes_[kf.id - 1].pose;
    const RadarFrame& data = kf_frames_[kf.frame_index];
    obs.measured_ra = &data.ra;
    obs.measured_rd = kf.id > 0 ? &data.rd : nullptr;
    obs.optimize_pose = kf.id != 0;
    return obs;
  }

  void create_keyframe(const RadarFrame& frame, const Pose2& predicted, double /*dt*/) {
    Keyframe kf;
    kf.id = static_cast<int>(keyframes_.size());
    kf.timestamp = frame.timestamp;
    kf.pose = predicted;
    kf.dt_prev = frame.timestamp - keyframes_.back().timestamp;
    kf.frame_index = static_cast<int>(kf_frames_.size());
    kf_frames_.push_back(frame);
    keyframes_.push_back(kf);
    last_kf_frame_count_ = frame_count_;
    Keyframe& stored = keyframes_.back();

    if (opts_.enable_backend) {
      // stage 1: pose refinement of the newest keyframe only
      auto newest_obs = observation_for(stored, -1);
      const RefineResult refined = refine_pose(newest_obs, scene_, cfg_, opts_.weights,
                                               opts_.opt, opts_.use_rd, opts_.limits);
      stored.pose = refined.pose;
      log_stage(stored.id, "pose", refined.iteration_losses, refined.diagnostic);

      // stage 2: mapping over the sliding window
      WindowSpec map_spec;
      map_spec.kind = WindowKind::Sliding;
      map_spec.n_sliding = opts_.map_window;
      const auto map_idx = select_window(keyframes_, keyframes_.size() - 1, map_spec);
      std::vector<KeyframeObservation> map_obs;
      for (std::size_t idx : map_idx) map_obs.push_back(observation_for(keyframes_[idx], -1));
      MapUpkeep upkeep;
      upkeep.densify_now =
          opts_.limits.densify_interval > 0 && stored.id % opts_.limits.densify_interval == 0;
      upkeep.tau_d = opts_.tau_d_factor * cfg_.noise_floor;
      upkeep.frame_ra = &kf_frames_[stored.frame_index].ra;
      upkeep.pose = stored.pose;
      auto map_result =
          update_map(map_obs, scene_, cfg_, opts_.weights, opts_.opt, opts_.limits, &upkeep);
      scene_ = std::move(map_result.scene);
      log_stage(stored.id, "map", map_result.iteration_losses, map_result.diagnostic);

      // stage 3: bundle adjustment over the BA window
      if (opts_.enable_ba && keyframes_.size() >= 2) {
        const auto ba_idx = select_window(keyframes_, keyframes_.size() - 1, opts_.ba_window);
        std::vector<KeyframeObservation> ba_obs;
        ba_obs.reserve(ba_idx.size());
        for (std::size_t w = 0; w < ba_idx.size(); ++w) {
          const Keyframe& member = keyframes_[ba_idx[w]];
          int prev_in_window = -1;
          for (std::size_t q = 0; q < ba_idx.size(); ++q) {
            if (static_cast<int>(ba_idx[q]) == member.id - 1) {
              prev_in_window = static_cast<int>(q);
              break;
            }
          }
          ba_obs.push_back(observation_for(member, prev_in_window));
        }
        auto ba = bundle_adjust(ba_obs, scene_, cfg_, opts_.weights, opts_.opt, opts_.limits,
                                opts_.use_rd);
        scene_ = std::move(ba.scene);
        for (std::size_t w = 0; w < ba_idx.size(); ++w) {
          keyframes_[ba_idx[w]].pose = ba.poses[w];
        }
        log_stage(stored.id, "ba", ba.iteration_losses, ba.diagnostic);
      }

      // keep stored velocities consistent with the optimized poses
      for (std::size_t i = 1; i < keyframes_.size(); ++i) {
        keyframes_[i].velocity = ego_velocity_from_poses(
            keyframes_[i].pose, keyframes_[i - 1].pose, keyframes_[i].dt_prev);
      }
    }

    current_pose_ = keyframes_.back().pose;
    records_.push_back({frame.timestamp, stored.id, Pose2()});
  }

  void log_stage(int frame_id, const std::string& stage, const std::vector<double>& losses,
                 const std::string& diagnostic) {
    for (std::size_t i = 0; i < losses.size(); ++i) {
      loss_log_.push_back({frame_id, stage, static_cast<int>(i), losses[i]});
    }
    if (!diagnostic.empty()) {
      loss_log_.push_back({frame_id, stage + "-abort", -1,
                           std::numeric_limits<double>::quiet_NaN()});
    }
  }

  RadarConfig cfg_;
  BackendOptions opts_;
  GaussianScene scene_;
  std::vector<Keyframe> keyframes_;
  std::vector<RadarFrame> kf_frames_;
  std::vector<FrameRecord> records_;
  std::vector<LossLogRow> loss_log_;
  Pose2 current_pose_;
  Vel2 last_velocity_;
  double last_time_ = 0.0;
  bool first_ = true;
  int frame_count_ = 0;
  int last_kf_frame_count_ = 0;
};

}  // namespace rgs
