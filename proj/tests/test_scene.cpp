#include "rgs/scene.hpp"

#include "rgs/renderer.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace rgs;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

RadarConfig test_config() {
  RadarConfig cfg;
  cfg.n_range = 32;
  cfg.n_azimuth = 24;
  cfg.n_doppler = 8;
  cfg.range_res = 0.25;
  cfg.azimuth_fov = kPi / 2.0;
  cfg.doppler_res = 0.25;
  cfg.gain_table = raised_cosine_gain(24, kPi / 2.0);
  cfg.power_const = 1.0;
  cfg.noise_floor = 1e-6;
  return cfg;
}

}  // namespace

TEST(Covariance, AxisAligned) {
  Gaussian2D g;
  g.orient = 0.0;
  g.scales = {1.0, 2.0};
  const Eigen::Matrix2d cov = covariance(g);
  EXPECT_NEAR(cov(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(cov(1, 1), 4.0, 1e-12);
  EXPECT_NEAR(cov(0, 1), 0.0, 1e-12);
}

TEST(Covariance, QuarterTurnSwapsAxes) {
  // hand rotation of the diagonal: Rot(pi/2) diag(1,4) Rot(pi/2)^T = diag(4,1)
  Gaussian2D g;
  g.orient = kPi / 2.0;
  g.scales = {1.0, 2.0};
  const Eigen::Matrix2d cov = covariance(g);
  EXPECT_NEAR(cov(0, 0), 4.0, 1e-12);
  EXPECT_NEAR(cov(1, 1), 1.0, 1e-12);
  EXPECT_NEAR(cov(0, 1), 0.0, 1e-12);
}

TEST(Covariance, SymmetricWithExpectedDetAndEigenvalues) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  std::uniform_real_distribution<double> scale(0.05, 2.0);
  for (int i = 0; i < 200; ++i) {
    Gaussian2D g;
    g.orient = angle(rng);
    g.scales = {scale(rng), scale(rng)};
    const Eigen::Matrix2d cov = covariance(g);
    EXPECT_NEAR(cov(0, 1), cov(1, 0), 1e-12);
    const double det = cov.determinant();
    const double expected = g.scales.x() * g.scales.y();
    EXPECT_NEAR(det, expected * expected, 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    const double lo = std::min(g.scales.x(), g.scales.y());
    const double hi = std::max(g.scales.x(), g.scales.y());
    EXPECT_NEAR(eig.eigenvalues()(0), lo * lo, 1e-10);
    EXPECT_NEAR(eig.eigenvalues()(1), hi * hi, 1e-10);
  }
}

TEST(InitFromFrame, AllZeroImageGivesEmptyScene) {
  const RadarConfig cfg = test_config();
  const RaImage ra(cfg.n_range, cfg.n_azimuth, 0.0);
  const GaussianScene scene = init_from_frame(ra, Pose2(), cfg, 1e-3);
  EXPECT_TRUE(scene.empty());
}

TEST(InitFromFrame, SingleBinBackProjects) {
  const RadarConfig cfg = test_config();
  RaImage ra(cfg.n_range, cfg.n_azimuth, 0.0);
  const int r = 10, a = 7;
  ra(r, a) = 1.0;
  const GaussianScene scene = init_from_frame(ra, Pose2(), cfg, 1e-3);
  ASSERT_EQ(scene.size(), 1u);
  const double range = (r + 0.5) * cfg.range_res;
  const double azimuth = -cfg.azimuth_fov / 2.0 + a * cfg.azimuth_step();
  EXPECT_NEAR(scene.gaussians[0].mean.x(), range * std::cos(azimuth), 1e-12);
  EXPECT_NEAR(scene.gaussians[0].mean.y(), range * std::sin(azimuth), 1e-12);
  // power_ratio solves the radar equation for the observed power
  EXPECT_NEAR(scene.gaussians[0].power_ratio, range * range * range * range, 1e-9);
}

TEST(InitFromFrame, PlateauYieldsSingleDetectionAtLowestIndex) {
  const RadarConfig cfg = test_config();
  RaImage ra(cfg.n_range, cfg.n_azimuth, 0.0);
  ra(5, 5) = 2.0;
  ra(5, 6) = 2.0;
  const GaussianScene scene = init_from_frame(ra, Pose2(), cfg, 1e-3);
  ASSERT_EQ(scene.size(), 1u);
  const double azimuth = -cfg.azimuth_fov / 2.0 + 5 * cfg.azimuth_step();
  const double range = 5.5 * cfg.range_res;
  EXPECT_NEAR(scene.gaussians[0].mean.x(), range * std::cos(azimuth), 1e-12);
}

TEST(InitFromFrame, RecoversSimulatedGaussiansWithinTwoBins) {
  const RadarConfig cfg = test_config();
  GaussianScene gt;
  gt.bounds.min = {-10.0, -10.0};
  gt.bounds.max = {10.0, 10.0};
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 4; ++i) {
    Gaussian2D g;
    const double range = 2.0 + 4.0 * u(rng);
    const double azimuth = (u(rng) - 0.5) * cfg.azimuth_fov * 0.7;
    g.mean = {range * std::cos(azimuth), range * std::sin(azimuth)};
    g.orient = u(rng);
    g.scales = {0.15, 0.15};
    g.power_ratio = 5.0 + 5.0 * u(rng);
    gt.gaussians.push_back(g);
  }
  const RaImage ra = render_ra(gt, Pose2(), cfg);
  const GaussianScene init = init_from_frame(ra, Pose2(), cfg, 5e-4);
  ASSERT_FALSE(init.empty());
  const double tol = 2.0 * std::max(cfg.range_res, 6.0 * cfg.azimuth_step());
  for (const Gaussian2D& g : gt.gaussians) {
    double best = 1e9;
    for (const Gaussian2D& h : init.gaussians) {
      best = std::min(best, (g.mean - h.mean).norm());
    }
    EXPECT_LT(best, tol);
  }
}

TEST(Densify, IdentityWhenRenderMatches) {
  const RadarConfig cfg = test_config();
  RaImage measured(cfg.n_range, cfg.n_azimuth, 0.5);
  const GaussianScene scene;
  const GaussianScene out = densify(scene, measured, measured, Pose2(), cfg, 1e-3);
  EXPECT_EQ(out.size(), 0u);
}

TEST(Densify, RespectsBudgetHighestResidualFirst) {
  const RadarConfig cfg = test_config();
  RaImage measured(cfg.n_range, cfg.n_azimuth, 0.0);
  const RaImage rendered(cfg.n_range, cfg.n_azimuth, 0.0);
  measured(4, 4) = 1.0;
  measured(8, 8) = 3.0;
  measured(12, 12) = 2.0;
  SceneLimits limits;
  limits.n_max = 2;
  GaussianScene scene;
  scene.bounds.min = {-20.0, -20.0};
  scene.bounds.max = {20.0, 20.0};
  const GaussianScene out = densify(scene, measured, rendered, Pose2(), cfg, 0.5, limits);
  ASSERT_EQ(out.size(), 2u);
  // sorted by residual: bins (8,8) then (12,12)
  const double range0 = 8.5 * cfg.range_res;
  EXPECT_NEAR(out.gaussians[0].mean.norm(), range0, 1e-9);
  const double range1 = 12.5 * cfg.range_res;
  EXPECT_NEAR(out.gaussians[1].mean.norm(), range1, 1e-9);
}

TEST(Prune, DropsZeroPowerGaussians) {
  GaussianScene scene;
  Gaussian2D g;
  g.power_ratio = 0.0;
  scene.gaussians.push_back(g);
  const GaussianScene out = prune(scene, 1e-4);
  EXPECT_TRUE(out.empty());
}

TEST(Prune, DropsOutOfBoundsAndNeverGrows) {
  GaussianScene scene;
  scene.bounds.min = {-1.0, -1.0};
  scene.bounds.max = {1.0, 1.0};
  Gaussian2D in_bounds;
  in_bounds.mean = {0.5, 0.5};
  in_bounds.power_ratio = 1.0;
  Gaussian2D outside = in_bounds;
  outside.mean = {3.0, 0.0};
  scene.gaussians = {in_bounds, outside};
  const GaussianScene out = prune(scene, 1e-4);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out.gaussians[0].mean.x(), 0.5, 1e-15);
}

TEST(SceneIo, RoundTripIsFieldwiseEqual) {
  GaussianScene scene;
  scene.bounds.min = {-12.5, -3.25};
  scene.bounds.max = {14.0, 9.75};
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 17; ++i) {
    Gaussian2D g;
    g.mean = {u(rng), u(rng)};
    g.orient = u(rng);
    g.scales = {std::abs(u(rng)) + 0.05, std::abs(u(rng)) + 0.05};
    g.power_ratio = std::abs(u(rng));
    scene.gaussians.push_back(g);
  }
  const std::string path = temp_path("rgs_scene_roundtrip.txt");
  save_scene(scene, path);
  const GaussianScene back = load_scene(path);
  ASSERT_EQ(back.size(), scene.size());
  EXPECT_EQ(back.bounds.min.x(), scene.bounds.min.x());
  EXPECT_EQ(back.bounds.max.y(), scene.bounds.max.y());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    EXPECT_EQ(back.gaussians[i].mean.x(), scene.gaussians[i].mean.x());
    EXPECT_EQ(back.gaussians[i].mean.y(), scene.gaussians[i].mean.y());
    EXPECT_EQ(back.gaussians[i].orient, scene.gaussians[i].orient);
    EXPECT_EQ(back.gaussians[i].scales.x(), scene.gaussians[i].scales.x());
    EXPECT_EQ(back.gaussians[i].scales.y(), scene.gaussians[i].scales.y());
    EXPECT_EQ(back.gaussians[i].power_ratio, scene.gaussians[i].power_ratio);
  }
  std::remove(path.c_str());
}

TEST(SceneIo, EmptySceneRoundTrips) {
  GaussianScene scene;
  const std::string path = temp_path("rgs_scene_empty.txt");
  save_scene(scene, path);
  const GaussianScene back = load_scene(path);
  EXPECT_TRUE(back.empty());
  std::remove(path.c_str());
}

TEST(SceneIo, NegativeScaleRejectedWithLineNumber) {
  const std::string path = temp_path("rgs_scene_bad.txt");
  {
    std::ofstream out(path);
    out << "2 -10 -10 10 10\n";
    out << "0,0,0,0.5,0.5,1\n";
    out << "1,1,0,-0.5,0.5,1\n";
  }
  try {
    load_scene(path);
    FAIL() << "expected parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(SceneLifecycle, DensifyPruneKeepInvariants) {
  const RadarConfig cfg = test_config();
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneLimits limits;
  limits.n_max = 40;
  GaussianScene scene;
  scene.bounds.min = {-20.0, -20.0};
  scene.bounds.max = {20.0, 20.0};
  RaImage measured(cfg.n_range, cfg.n_azimuth, 0.0);
  for (int i = 0; i < 200; ++i) {
    measured(static_cast<int>(u(rng) * cfg.n_range), static_cast<int>(u(rng) * cfg.n_azimuth)) +=
        u(rng);
  }
  const RaImage rendered(cfg.n_range, cfg.n_azimuth, 0.0);
  const GaussianScene dense = densify(scene, measured, rendered, Pose2(), cfg, 0.01, limits);
  EXPECT_LE(dense.size(), limits.n_max);
  for (const Gaussian2D& g : dense.gaussians) {
    EXPECT_TRUE(dense.bounds.contains(g.mean));
    EXPECT_GE(g.scales.minCoeff(), limits.s_min);
    EXPECT_LE(g.scales.maxCoeff(), limits.s_max);
    EXPECT_GE(g.power_ratio, 0.0);
  }
  const GaussianScene pruned = prune(dense, 1e-4);
  EXPECT_LE(pruned.size(), dense.size());
}
