#pragma once

#include "rgs/geometry.hpp"
#include "rgs/trajectory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rgs {

namespace detail {

/// Nearest-neighbor timestamp association, max gap = half the ground-truth
/// frame period; unmatched poses are dropped.
inline std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est,
                                                                  const Trajectory& gt) {
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  if (est.empty() || gt.empty()) return matches;
  double period = 0.1;
  if (gt.size() > 1) {
    std::vector<double> gaps;
    gaps.reserve(gt.size() - 1);
    for (std::size_t i = 1; i < gt.size(); ++i) gaps.push_back(gt[i].t - gt[i - 1].t);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    period = gaps[gaps.size() / 2];
  }
  const double max_gap = period / 2.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    while (j + 1 < gt.size() &&
           std::abs(gt[j + 1].t - est[i].t) <= std::abs(gt[j].t - est[i].t)) {
      ++j;
    }
    if (std::abs(gt[j].t - est[i].t) <= max_gap) matches.emplace_back(i, j);
  }
  return matches;
}

}  // namespace detail

/// Closed-form least-squares SE(2) alignment (rotation + translation, no
/// scale) mapping estimated positions onto ground truth.
inline Pose2 align_se2(const Trajectory& est, const Trajectory& gt) {
  const auto matches = detail::associate(est, gt);
  if (matches.size() < 2) {
    throw std::invalid_argument("align_se2: need at least 2 matched poses");
  }
  Eigen::Vector2d mean_e = Eigen::Vector2d::Zero(), mean_g = Eigen::Vector2d::Zero();
  for (const auto& [i, j] : matches) {
    mean_e += est[i].pose.translation();
    mean_g += gt[j].pose.translation();
  }
  mean_e /= static_cast<double>(matches.size());
  mean_g /= static_cast<double>(matches.size());
  double sin_sum = 0.0, cos_sum = 0.0;
  for (const auto& [i, j] : matches) {
    const Eigen::Vector2d e = est[i].pose.translation() - mean_e;
    const Eigen::Vector2d g = gt[j].pose.translation() - mean_g;
    cos_sum += e.dot(g);
    sin_sum += e.x() * g.y() - e.y() * g.x();
  }
  const double theta = (sin_sum == 0.0 && cos_sum == 0.0) ? 0.0 : std::atan2(sin_sum, cos_sum);
  const Eigen::Vector2d t = mean_g - rotation2d(theta) * mean_e;
  return {t.x(), t.y(), theta};
}

/// Absolute pose error after rigid alignment.
struct ApeResult {
  double trans_rmse = 0.0;  // m
  double rot_rmse = 0.0;    // degrees
  std::vector<double> per_pose_trans;
  std::vector<double> per_pose_rot;  // degrees
  std::size_t matched = 0;
};

inline ApeResult ape(const Trajectory& est, const Trajectory& gt) {
  const Pose2 align = align_se2(est, gt);
  const auto matches = detail::associate(est, gt);
  ApeResult result;
  result.matched = matches.size();
  double trans_sq = 0.0, rot_sq = 0.0;
  for (const auto& [i, j] : matches) {
    const Eigen::Vector2d p =
        align.rotation() * est[i].pose.translation() + align.translation();
    const double trans_err = (p - gt[j].pose.translation()).norm();
    const double rot_err =
        std::abs(wrap_angle(est[i].pose.yaw + align.yaw - gt[j].pose.yaw)) * 180.0 / kPi;
    result.per_pose_trans.push_back(trans_err);
    result.per_pose_rot.push_back(rot_err);
    trans_sq += trans_err * trans_err;
    rot_sq += rot_err * rot_err;
  }
  result.trans_rmse = std::sqrt(trans_sq / matches.size());
  result.rot_rmse = std::sqrt(rot_sq / matches.size());
  return result;
}

}  // namespace rgs
