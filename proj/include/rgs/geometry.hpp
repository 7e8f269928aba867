#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace rgs {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) {
    a += 2.0 * kPi;
  } else if (a > kPi) {
    a -= 2.0 * kPi;
  }
  return a;
}

inline Eigen::Matrix2d rotation2d(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

/// Planar rigid pose (sensor-to-world). yaw is kept in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(wrap_angle(yaw_)) {}

  Eigen::Vector2d translation() const { return {x, y}; }
  Eigen::Matrix2d rotation() const { return rotation2d(yaw); }
};

/// Linear velocity in the sensor/body frame.
struct Vel2 {
  double vx = 0.0;
  double vy = 0.0;

  double norm() const { return std::hypot(vx, vy); }
};

inline Pose2 pose_compose(const Pose2& a, const Pose2& b) {
  const Eigen::Vector2d t = a.translation() + a.rotation() * b.translation();
  return {t.x(), t.y(), a.yaw + b.yaw};
}

inline Pose2 pose_inverse(const Pose2& a) {
  const Eigen::Vector2d t = -(rotation2d(-a.yaw) * a.translation());
  return {t.x(), t.y(), -a.yaw};
}

inline Eigen::Vector2d world_to_sensor(const Eigen::Vector2d& p_world, const Pose2& pose) {
  return rotation2d(-pose.yaw) * (p_world - pose.translation());
}

inline Eigen::Vector2d sensor_to_world(const Eigen::Vector2d& p_sensor, const Pose2& pose) {
  return pose.rotation() * p_sensor + pose.translation();
}

}  // namespace rgs
