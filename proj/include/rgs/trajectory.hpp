#pragma once

#include "rgs/geometry.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

struct TimedPose {
  double t = 0.0;
  Pose2 pose;
};

using Trajectory = std::vector<TimedPose>;

/// TUM format: "t x y z qx qy qz qw" per line, z = 0 and the quaternion about
/// the z axis for planar poses.
inline void write_tum(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_tum: cannot open " + path);
  out.precision(std::numeric_limits<double>::max_digits10);
  for (const TimedPose& tp : traj) {
    const double qz = std::sin(tp.pose.yaw / 2.0);
    const double qw = std::cos(tp.pose.yaw / 2.0);
    out << tp.t << ' ' << tp.pose.x << ' ' << tp.pose.y << " 0 0 0 " << qz << ' ' << qw << '\n';
  }
  if (!out) throw std::runtime_error("write_tum: write failed for " + path);
}

inline Trajectory read_tum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_tum: cannot open " + path);
  Trajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, x, y, z, qx, qy, qz, qw;
    if (!(ss >> t >> x >> y >> z >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error("read_tum: " + path + ": line " + std::to_string(line_no) +
                               ": expected 8 fields");
    }
    const double yaw = std::atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz));
    traj.push_back({t, Pose2(x, y, yaw)});
  }
  return traj;
}

}  // namespace rgs
