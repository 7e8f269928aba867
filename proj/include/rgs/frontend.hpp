#pragma once

#include "rgs/geometry.hpp"
#include "rgs/image.hpp"
#include "rgs/renderer.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace rgs {

class DegenerateGeometryError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sensor-frame feature point with its measured Doppler velocity.
struct DopplerPoint {
  Eigen::Vector2d pos{1.0, 0.0};  // m, |pos| > 0
  double doppler = 0.0;           // m/s, sign per kDopplerSign
};

struct GyroSample {
  double omega = 0.0;      // rad/s yaw rate
  double timestamp = 0.0;  // s
};

/// One radar measurement frame as consumed by the odometry pipeline.
struct RadarFrame {
  double timestamp = 0.0;
  RaImage ra;
  RdImage rd;
  std::vector<DopplerPoint> points;
  double gyro_rate = 0.0;  // rad/s
};

/// 2D cell-averaging CFAR. A cell is detected when its value exceeds alpha
/// times the mean of the training ring (square ring of width `train` outside
/// a `guard` ring); border cells use the valid subset of the ring.
inline std::vector<std::pair<int, int>> cfar_detect(const RaImage& ra, int guard, int train,
                                                    double alpha) {
  if (train < 1) throw std::invalid_argument("cfar_detect: train must be >= 1");
  if (guard < 0) throw std::invalid_argument("cfar_detect: guard must be >= 0");
  if (alpha <= 1.0) throw std::invalid_argument("cfar_detect: alpha must be > 1");
  const int reach = guard + train;
  if (2 * reach + 1 > ra.rows() || 2 * reach + 1 > ra.cols()) {
    throw std::invalid_argument("cfar_detect: CFAR window exceeds image");
  }
  std::vector<std::pair<int, int>> detections;
  for (int r = 0; r < ra.rows(); ++r) {
    for (int c = 0; c < ra.cols(); ++c) {
      double sum = 0.0;
      int count = 0;
      for (int dr = -reach; dr <= reach; ++dr) {
        for (int dc = -reach; dc <= reach; ++dc) {
          if (std::abs(dr) <= guard && std::abs(dc) <= guard) continue;
          const int nr = r + dr;
          const int nc = c + dc;
          if (nr < 0 || nr >= ra.rows() || nc < 0 || nc >= ra.cols()) continue;
          sum += ra(nr, nc);
          ++count;
        }
      }
      const double mean = count > 0 ? sum / count : 0.0;
      if (ra(r, c) > alpha * mean) detections.emplace_back(r, c);
    }
  }
  return detections;
}

struct EgoVelocityEstimate {
  Vel2 velocity;
  double residual_rms = 0.0;
};

/// Least-squares ego-velocity from Doppler points: stacking unit line-of-sight
/// directions as H and Doppler values as y, solves v = (H^T H)^-1 H^T y.
inline EgoVelocityEstimate ego_velocity_lsq(std::span<const DopplerPoint> points) {
  if (points.size() < 2) {
    throw std::invalid_argument("ego_velocity_lsq: need at least 2 Doppler points");
  }
  Eigen::Matrix2d hth = Eigen::Matrix2d::Zero();
  Eigen::Vector2d hty = Eigen::Vector2d::Zero();
  std::vector<Eigen::Vector2d> dirs;
  dirs.reserve(points.size());
  for (const DopplerPoint& p : points) {
    const double norm = p.pos.norm();
    if (norm <= 0.0) throw std::invalid_argument("ego_velocity_lsq: point at sensor origin");
    const Eigen::Vector2d r = p.pos / norm;
    dirs.push_back(r);
    hth += r * r.transpose();
    hty += r * p.doppler;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(hth);
  const double lmin = eig.eigenvalues()(0);
  const double lmax = eig.eigenvalues()(1);
  if (!(lmin > 0.0) || std::sqrt(lmax / lmin) > 1e8) {
    throw DegenerateGeometryError("ego_velocity_lsq: degenerate point geometry (collinear directions)");
  }
  const Eigen::Vector2d v = hth.ldlt().solve(hty);
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double res = points[i].doppler - dirs[i].dot(v);
    sq_sum += res * res;
  }
  return {{v.x(), v.y()}, std::sqrt(sq_sum / points.size())};
}

/// Explicit-Euler pose propagation from body velocity and gyro yaw rate.
inline Pose2 dead_reckon(const Pose2& prev, const Vel2& v, const GyroSample& gyro, double dt) {
  if (dt <= 0.0) throw std::domain_error("dead_reckon: dt must be > 0");
  const Eigen::Vector2d step = prev.rotation() * Eigen::Vector2d(v.vx, v.vy) * dt;
  return {prev.x + step.x(), prev.y + step.y(), prev.yaw + gyro.omega * dt};
}

}  // namespace rgs
