#pragma once

#include "rgs/config.hpp"
#include "rgs/frontend.hpp"
#include "rgs/image.hpp"
#include "rgs/simulator.hpp"
#include "rgs/trajectory.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rgs {

/// A measurement directory: per-frame RA/RD CSV + PGM, Doppler point CSVs,
/// one gyro CSV, the ground-truth TUM trajectory and the config used.
struct Dataset {
  RadarConfig radar;
  std::vector<RadarFrame> frames;
  Trajectory ground_truth;
  KeyValueFile config;
};

namespace detail {

inline std::string frame_tag(int k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", k);
  return buf;
}

}  // namespace detail

inline void write_dataset(const SimScenario& sc, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  KeyValueFile kv;
  radar_to_config(sc.radar, kv);
  noise_to_config(sc.noise, kv);
  kv.set("sim.kind", to_string(sc.kind));
  kv.set_int("sim.seed", static_cast<long long>(sc.seed));
  kv.set_double("sim.speed", sc.speed);
  kv.set_double("sim.frame_rate", sc.frame_rate);
  kv.set_int("sim.frames", sc.n_frames());
  kv.set_int("sim.max_doppler_points", sc.max_doppler_points);
  kv.set_double("world.min_x", sc.gt_scene.bounds.min.x());
  kv.set_double("world.min_y", sc.gt_scene.bounds.min.y());
  kv.set_double("world.max_x", sc.gt_scene.bounds.max.x());
  kv.set_double("world.max_y", sc.gt_scene.bounds.max.y());
  kv.write(dir + "/scenario.cfg");

  write_tum(sc.gt_trajectory, dir + "/groundtruth.tum");
  save_scene(sc.gt_scene, dir + "/gt_scene.txt");

  std::ofstream gyro(dir + "/gyro.csv");
  if (!gyro) throw std::runtime_error("write_dataset: cannot open gyro.csv");
  gyro.precision(std::numeric_limits<double>::max_digits10);
  gyro << "timestamp,omega\n";

  for (int k = 0; k < sc.n_frames(); ++k) {
    const RadarFrame frame = synthesize_frame(sc, k);
    const std::string tag = detail::frame_tag(k);
    write_csv(frame.ra, dir + "/ra_" + tag + ".csv");
    write_csv(frame.rd, dir + "/rd_" + tag + ".csv");
    write_pgm16(frame.ra, dir + "/ra_" + tag + ".pgm");
    write_pgm16(frame.rd, dir + "/rd_" + tag + ".pgm");
    std::ofstream pts(dir + "/points_" + tag + ".csv");
    if (!pts) throw std::runtime_error("write_dataset: cannot open points csv");
    pts.precision(std::numeric_limits<double>::max_digits10);
    pts << "x,y,doppler\n";
    for (const DopplerPoint& p : frame.points) {
      pts << p.pos.x() << ',' << p.pos.y() << ',' << p.doppler << '\n';
    }
    gyro << frame.timestamp << ',' << frame.gyro_rate << '\n';
  }
}

inline Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir + "/scenario.cfg")) {
    throw std::runtime_error("read_dataset: " + dir + " has no scenario.cfg");
  }
  Dataset ds;
  ds.config = KeyValueFile::parse_file(dir + "/scenario.cfg");
  ds.radar = radar_from_config(ds.config);
  ds.ground_truth = read_tum(dir + "/groundtruth.tum");

  std::vector<double> gyro_t, gyro_w;
  {
    std::ifstream in(dir + "/gyro.csv");
    if (!in) throw std::runtime_error("read_dataset: cannot open gyro.csv");
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) {
        throw std::runtime_error("read_dataset: malformed gyro.csv row '" + line + "'");
      }
      gyro_t.push_back(std::stod(line.substr(0, comma)));
      gyro_w.push_back(std::stod(line.substr(comma + 1)));
    }
  }

  const int n = ds.config.get_int("sim.frames", static_cast<int>(gyro_t.size()));
  ds.frames.reserve(n);
  for (int k = 0; k < n; ++k) {
    const std::string tag = detail::frame_tag(k);
    RadarFrame frame;
    frame.ra = read_csv<RaTag>(dir + "/ra_" + tag + ".csv");
    frame.rd = read_csv<RdTag>(dir + "/rd_" + tag + ".csv");
    frame.timestamp = k < static_cast<int>(gyro_t.size()) ? gyro_t[k] : 0.0;
    frame.gyro_rate = k < static_cast<int>(gyro_w.size()) ? gyro_w[k] : 0.0;
    std::ifstream pts(dir + "/points_" + tag + ".csv");
    if (!pts) throw std::runtime_error("read_dataset: missing points_" + tag + ".csv");
    std::string line;
    std::getline(pts, line);  // header
    int line_no = 1;
    while (std::getline(pts, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      double fields[3];
      for (int f = 0; f < 3; ++f) {
        if (!std::getline(ss, cell, ',')) {
          throw std::runtime_error("read_dataset: points_" + tag + ".csv line " +
                                   std::to_string(line_no) + ": expected 3 fields");
        }
        fields[f] = std::stod(cell);
      }
      DopplerPoint p;
      p.pos = {fields[0], fields[1]};
      p.doppler = fields[2];
      frame.points.push_back(p);
    }
    ds.frames.push_back(std::move(frame));
  }
  return ds;
}

}  // namespace rgs
