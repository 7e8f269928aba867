#include "rgs/renderer.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rgs;

namespace {

RadarConfig test_config() {
  RadarConfig cfg;
  cfg.n_range = 32;
  cfg.n_azimuth = 24;
  cfg.n_doppler = 9;
  cfg.range_res = 0.25;
  cfg.azimuth_fov = kPi / 2.0;
  cfg.doppler_res = 0.25;
  cfg.gain_table = raised_cosine_gain(24, kPi / 2.0);
  cfg.power_const = 1.0;
  return cfg;
}

GaussianScene random_scene(int n, std::mt19937_64& rng, const RadarConfig& cfg) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianScene scene;
  scene.bounds.min = {-20.0, -20.0};
  scene.bounds.max = {20.0, 20.0};
  for (int i = 0; i < n; ++i) {
    Gaussian2D g;
    const double range = 2.0 + 4.0 * u(rng);
    const double azimuth = (u(rng) - 0.5) * cfg.azimuth_fov * 0.8;
    g.mean = {range * std::cos(azimuth), range * std::sin(azimuth)};
    g.orient = u(rng) * kPi - kPi / 2.0;
    g.scales = {0.1 + 0.4 * u(rng), 0.1 + 0.4 * u(rng)};
    g.power_ratio = 0.5 + u(rng);
    scene.gaussians.push_back(g);
  }
  return scene;
}

/// All-pairs range-Doppler conversion without the bin-window truncation.
RdImage render_rd_bruteforce(const RaImage& ra, const DopplerMap& dop, const RadarConfig& cfg) {
  RdImage rd(cfg.n_range, cfg.n_doppler, 0.0);
  const double sigma = cfg.kernel_sigma_factor * cfg.doppler_res;
  const double c0 = -(cfg.n_doppler - 1) / 2.0 * cfg.doppler_res;
  for (int r = 0; r < cfg.n_range; ++r) {
    for (int d = 0; d < cfg.n_doppler; ++d) {
      const double vd = c0 + d * cfg.doppler_res;
      double acc = 0.0;
      for (int a = 0; a < cfg.n_azimuth; ++a) {
        const double diff = dop(r, a) - vd;
        acc += cfg.gain_table[a] * ra(r, a) * std::exp(-diff * diff / (2.0 * sigma * sigma));
      }
      rd(r, d) = acc;
    }
  }
  return rd;
}

}  // namespace

TEST(ProjectToPolar, HandJacobianCase) {
  Gaussian2D g;
  g.mean = {5.0, 0.0};
  g.scales = {1.0, 1.0};
  const auto proj = project_to_polar(g, Pose2());
  ASSERT_TRUE(proj.has_value());
  EXPECT_NEAR(proj->range, 5.0, 1e-12);
  EXPECT_NEAR(proj->azimuth, 0.0, 1e-12);
  EXPECT_NEAR(proj->cov_polar(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(proj->cov_polar(1, 1), 1.0 / 25.0, 1e-12);
  EXPECT_NEAR(proj->cov_polar(0, 1), 0.0, 1e-12);
}

TEST(ProjectToPolar, AxisCase) {
  Gaussian2D g;
  g.mean = {0.0, 3.0};
  const auto proj = project_to_polar(g, Pose2());
  ASSERT_TRUE(proj.has_value());
  EXPECT_NEAR(proj->azimuth, kPi / 2.0, 1e-12);
}

TEST(ProjectToPolar, DegenerateAtSensorSkipped) {
  Gaussian2D g;
  g.mean = {1.0, 2.0};
  EXPECT_FALSE(project_to_polar(g, Pose2(1.0, 2.0, 0.3)).has_value());
}

TEST(RenderRa, EmptySceneIsZero) {
  const RadarConfig cfg = test_config();
  const RaImage img = render_ra(GaussianScene{}, Pose2(), cfg);
  for (double v : img.data()) EXPECT_EQ(v, 0.0);
}

TEST(RenderRa, DeltaLimitHitsSingleBin) {
  const RadarConfig cfg = test_config();
  const int r = 12, a = 10;
  const double range = (r + 0.5) * cfg.range_res;
  const double azimuth = -cfg.azimuth_fov / 2.0 + a * cfg.azimuth_step();
  Gaussian2D g;
  g.mean = {range * std::cos(azimuth), range * std::sin(azimuth)};
  g.scales = {0.002, 0.002};
  g.power_ratio = 2.0;
  GaussianScene scene;
  scene.gaussians = {g};
  const RaImage img = render_ra(scene, Pose2(), cfg);
  const double expected = received_power(g.power_ratio, range, cfg);
  EXPECT_NEAR(img(r, a), expected, 1e-12 * expected);
  double off_peak = 0.0;
  for (int rr = 0; rr < cfg.n_range; ++rr) {
    for (int aa = 0; aa < cfg.n_azimuth; ++aa) {
      if (rr == r && aa == a) continue;
      off_peak = std::max(off_peak, img(rr, aa));
    }
  }
  EXPECT_LT(off_peak, 1e-9 * expected);
}

TEST(RenderRa, AdditiveBlending) {
  const RadarConfig cfg = test_config();
  std::mt19937_64 rng(3);
  GaussianScene one = random_scene(1, rng, cfg);
  GaussianScene two = one;
  two.gaussians.push_back(two.gaussians.front());
  const RaImage img1 = render_ra(one, Pose2(), cfg);
  const RaImage img2 = render_ra(two, Pose2(), cfg);
  for (std::size_t i = 0; i < img1.size(); ++i) {
    EXPECT_NEAR(img2.data()[i], 2.0 * img1.data()[i], 1e-12);
  }
}

TEST(RenderRa, AdditiveOverScenePartition) {
  const RadarConfig cfg = test_config();
  std::mt19937_64 rng(5);
  const GaussianScene whole = random_scene(12, rng, cfg);
  GaussianScene part_a = whole, part_b = whole;
  part_a.gaussians.assign(whole.gaussians.begin(), whole.gaussians.begin() + 5);
  part_b.gaussians.assign(whole.gaussians.begin() + 5, whole.gaussians.end());
  const Pose2 pose(0.3, -0.2, 0.1);
  const RaImage img = render_ra(whole, pose, cfg);
  const RaImage img_a = render_ra(part_a, pose, cfg);
  const RaImage img_b = render_ra(part_b, pose, cfg);
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_NEAR(img.data()[i], img_a.data()[i] + img_b.data()[i], 1e-9);
  }
}

TEST(RenderRa, GaugeInvariance) {
  const RadarConfig cfg = test_config();
  std::mt19937_64 rng(7);
  const GaussianScene scene = random_scene(10, rng, cfg);
  const Pose2 pose(0.5, 0.25, 0.2);
  const Pose2 gauge(3.0, -2.0, 0.8);
  GaussianScene moved = scene;
  for (Gaussian2D& g : moved.gaussians) {
    g.mean = gauge.rotation() * g.mean + gauge.translation();
    g.orient = wrap_angle(g.orient + gauge.yaw);
  }
  const RaImage img = render_ra(scene, pose, cfg);
  const RaImage img_moved = render_ra(moved, pose_compose(gauge, pose), cfg);
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_NEAR(img.data()[i], img_moved.data()[i], 1e-9);
  }
}

TEST(RenderRa, OutOfFovContributesNothing) {
  const RadarConfig cfg = test_config();
  Gaussian2D g;
  g.mean = {-5.0, 0.0};  // behind the sensor
  g.scales = {0.3, 0.3};
  g.power_ratio = 10.0;
  GaussianScene scene;
  scene.gaussians = {g};
  const RaImage img = render_ra(scene, Pose2(), cfg);
  for (double v : img.data()) EXPECT_EQ(v, 0.0);
}

TEST(EgoVelocity, StationaryIsZero) {
  const Vel2 v = ego_velocity_from_poses(Pose2(1, 2, 0.3), Pose2(1, 2, 0.3), 0.1);
  EXPECT_DOUBLE_EQ(v.vx, 0.0);
  EXPECT_DOUBLE_EQ(v.vy, 0.0);
}

TEST(EgoVelocity, ForwardMotion) {
  const Vel2 v = ego_velocity_from_poses(Pose2(1, 0, 0), Pose2(0, 0, 0), 1.0);
  EXPECT_NEAR(v.vx, 1.0, 1e-12);
  EXPECT_NEAR(v.vy, 0.0, 1e-12);
}

TEST(EgoVelocity, RotatedBodyFrame) {
  // hand rotation: Rot(-pi/2) * (1, 0) = (0, -1)
  const Vel2 v = ego_velocity_from_poses(Pose2(1, 0, kPi / 2.0), Pose2(0, 0, kPi / 2.0), 1.0);
  EXPECT_NEAR(v.vx, 0.0, 1e-12);
  EXPECT_NEAR(v.vy, -1.0, 1e-12);
}

TEST(EgoVelocity, RejectsNonPositiveDt) {
  EXPECT_THROW(ego_velocity_from_poses(Pose2(), Pose2(), 0.0), std::domain_error);
}

TEST(GaussianDoppler, ClosingVelocityAhead) {
  Gaussian2D g;
  g.mean = {5.0, 0.0};
  const auto d = gaussian_doppler(g, Pose2(), Vel2{2.0, 0.0});
  ASSERT_TRUE(d.has_value());
  EXPECT_NEAR(*d, 2.0, 1e-12);
}

TEST(GaussianDoppler, ZeroVelocityAndOrthogonal) {
  Gaussian2D ahead;
  ahead.mean = {5.0, 0.0};
  EXPECT_NEAR(*gaussian_doppler(ahead, Pose2(), Vel2{0.0, 0.0}), 0.0, 1e-15);
  Gaussian2D side;
  side.mean = {0.0, 5.0};
  EXPECT_NEAR(*gaussian_doppler(side, Pose2(), Vel2{2.0, 0.0}), 0.0, 1e-12);
}

TEST(DopplerMap, MatchesPerBinFormulaAndBound) {
  RadarConfig cfg = test_config();
  cfg.azimuth_fov = kPi;  // put bins exactly at 0 and pi/2
  cfg.n_azimuth = 5;
  cfg.gain_table = raised_cosine_gain(5, kPi);
  const DopplerMap m1 = render_doppler_map(Vel2{1.0, 0.0}, cfg);
  EXPECT_NEAR(m1(0, 2), 1.0, 1e-12);  // theta = 0
  const DopplerMap m2 = render_doppler_map(Vel2{0.0, 1.0}, cfg);
  EXPECT_NEAR(m2(0, 4), 1.0, 1e-12);  // theta = pi/2

  const DopplerMap zero = render_doppler_map(Vel2{0.0, 0.0}, cfg);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vel2 v{u(rng), u(rng)};
    const DopplerMap map = render_doppler_map(v, cfg);
    const double bound = std::hypot(v.vx, v.vy) + 1e-12;
    for (double val : map.data()) EXPECT_LE(std::abs(val), bound);
    for (int a = 0; a < cfg.n_azimuth; ++a) {
      for (int r = 1; r < cfg.n_range; ++r) EXPECT_EQ(map(r, a), map(0, a));
    }
  }
}

TEST(RenderRd, ZeroInZeroOut) {
  const RadarConfig cfg = test_config();
  const RaImage ra(cfg.n_range, cfg.n_azimuth, 0.0);
  const DopplerMap dop(cfg.n_range, cfg.n_azimuth, 0.0);
  const RdImage rd = render_rd(ra, dop, cfg);
  for (double v : rd.data()) EXPECT_EQ(v, 0.0);
}

TEST(RenderRd, KernelPeakAtBinCenter) {
  RadarConfig cfg = test_config();
  cfg.bin_window = cfg.n_doppler;
  RaImage ra(cfg.n_range, cfg.n_azimuth, 0.0);
  DopplerMap dop(cfg.n_range, cfg.n_azimuth, 0.0);
  const int r0 = 4, a0 = 11, d_star = 6;
  const double p = 3.0;
  ra(r0, a0) = p;
  const double vd = (d_star - (cfg.n_doppler - 1) / 2.0) * cfg.doppler_res;
  dop(r0, a0) = vd;
  const RdImage rd = render_rd(ra, dop, cfg);
  EXPECT_NEAR(rd(r0, d_star), cfg.gain_table[a0] * p, 1e-12);
}

TEST(RenderRd, MatchesBruteForceOracleWhenWindowCovers) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RadarConfig cfg;
  cfg.n_range = 8;
  cfg.n_azimuth = 6;
  cfg.n_doppler = 7;
  cfg.range_res = 0.5;
  cfg.azimuth_fov = kPi / 2.0;
  cfg.doppler_res = 0.4;
  cfg.gain_table = raised_cosine_gain(6, kPi / 2.0);
  cfg.bin_window = cfg.n_doppler;
  for (int trial = 0; trial < 25; ++trial) {
    RaImage ra(cfg.n_range, cfg.n_azimuth);
    DopplerMap dop(cfg.n_range, cfg.n_azimuth);
    for (double& v : ra.data()) v = u(rng);
    for (double& v : dop.data()) v = (u(rng) - 0.5) * 2.4;
    const RdImage rd = render_rd(ra, dop, cfg);
    const RdImage oracle = render_rd_bruteforce(ra, dop, cfg);
    for (std::size_t i = 0; i < rd.size(); ++i) {
      EXPECT_NEAR(rd.data()[i], oracle.data()[i], 1e-6);
    }
  }
}

TEST(RenderRd, TotalMassMatchesKernelSum) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RadarConfig cfg = test_config();
  cfg.bin_window = cfg.n_doppler;
  RaImage ra(cfg.n_range, cfg.n_azimuth);
  DopplerMap dop(cfg.n_range, cfg.n_azimuth);
  for (double& v : ra.data()) v = u(rng);
  for (double& v : dop.data()) v = (u(rng) - 0.5) * 2.0;
  const RdImage rd = render_rd(ra, dop, cfg);
  const double sigma = cfg.kernel_sigma_factor * cfg.doppler_res;
  const double c0 = -(cfg.n_doppler - 1) / 2.0 * cfg.doppler_res;
  for (int r = 0; r < cfg.n_range; ++r) {
    double row_sum = 0.0;
    for (int d = 0; d < cfg.n_doppler; ++d) row_sum += rd(r, d);
    double expected = 0.0;
    for (int a = 0; a < cfg.n_azimuth; ++a) {
      double kernel_sum = 0.0;
      for (int d = 0; d < cfg.n_doppler; ++d) {
        const double diff = dop(r, a) - (c0 + d * cfg.doppler_res);
        kernel_sum += std::exp(-diff * diff / (2.0 * sigma * sigma));
      }
      expected += cfg.gain_table[a] * ra(r, a) * kernel_sum;
    }
    EXPECT_NEAR(row_sum, expected, 1e-9);
  }
}
