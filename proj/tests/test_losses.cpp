#include "rgs/losses.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rgs;

namespace {

RaImage random_image(int rows, int cols, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  RaImage img(rows, cols);
  for (double& v : img.data()) v = dist(rng);
  return img;
}

}  // namespace

TEST(L1, ZeroForEqualImages) {
  RaImage a(4, 4, 0.7);
  EXPECT_DOUBLE_EQ(l1(a, a), 0.0);
}

TEST(L1, ConstantDifference) {
  RaImage a(4, 4, 0.0);
  RaImage b(4, 4, 2.5);
  EXPECT_DOUBLE_EQ(l1(a, b), 2.5);
}

TEST(L1, MatchesElementwiseOracle) {
  std::mt19937_64 rng(3);
  const RaImage a = random_image(9, 7, rng);
  const RaImage b = random_image(9, 7, rng);
  double sum = 0.0;
  for (int r = 0; r < a.rows(); ++r) {
    for (int c = 0; c < a.cols(); ++c) sum += std::abs(a(r, c) - b(r, c));
  }
  EXPECT_NEAR(l1(a, b), sum / (9.0 * 7.0), 1e-12);
}

TEST(L1, ShapeMismatchThrows) {
  RaImage a(4, 4), b(4, 5);
  EXPECT_THROW(l1(a, b), std::invalid_argument);
}

TEST(Ssim, SelfSimilarityIsOne) {
  std::mt19937_64 rng(5);
  const RaImage a = random_image(16, 14, rng);
  LossWeights w;
  EXPECT_NEAR(ssim(a, a, w), 1.0, 1e-9);
}

TEST(Ssim, ConstantImagesMatchClosedForm) {
  const RaImage a(13, 13, 0.0);
  const RaImage b(13, 13, 1.0);
  LossWeights w;
  // constant images: mu1=0, mu2=1, all (co)variances 0
  const double c1 = detail::kSsimC1, c2 = detail::kSsimC2;
  const double expected = (2.0 * 0.0 * 1.0 + c1) * (0.0 + c2) / ((0.0 + 1.0 + c1) * (0.0 + c2));
  EXPECT_NEAR(ssim(a, b, w), expected, 1e-12);
  EXPECT_NEAR(expected, c1 / (1.0 + c1), 1e-15);
}

TEST(Ssim, Symmetric) {
  std::mt19937_64 rng(7);
  const RaImage a = random_image(15, 12, rng);
  const RaImage b = random_image(15, 12, rng);
  LossWeights w;
  EXPECT_NEAR(ssim(a, b, w), ssim(b, a, w), 1e-12);
}

TEST(Ssim, RejectsImagesSmallerThanWindow) {
  RaImage a(8, 8, 0.5);
  LossWeights w;  // window 11
  EXPECT_THROW(ssim(a, a, w), std::invalid_argument);
}

TEST(ImageLoss, ZeroForIdenticalImages) {
  std::mt19937_64 rng(9);
  const RaImage a = random_image(14, 13, rng);
  LossWeights w;
  EXPECT_NEAR(image_loss(a, a, w), 0.0, 1e-12);
}

TEST(ImageLoss, PureL1WhenSsimWeightZero) {
  std::mt19937_64 rng(11);
  const RaImage a = random_image(6, 6, rng);
  const RaImage b = random_image(6, 6, rng);
  LossWeights w;
  w.lambda_ssim = 0.0;
  EXPECT_DOUBLE_EQ(image_loss(a, b, w), l1(a, b));
}

TEST(ImageLoss, MatchesComposedOracle) {
  std::mt19937_64 rng(13);
  const RaImage est = random_image(16, 13, rng, 0.0, 2.0);
  const RaImage meas = random_image(16, 13, rng, 0.0, 2.0);
  LossWeights w;
  const double q = detail::dynamic_range_scale(meas);
  RaImage x(est.rows(), est.cols()), y(est.rows(), est.cols());
  for (std::size_t i = 0; i < est.size(); ++i) {
    x.data()[i] = std::clamp(est.data()[i] / q, 0.0, 1.0);
    y.data()[i] = std::clamp(meas.data()[i] / q, 0.0, 1.0);
  }
  const double expected = (1.0 - w.lambda_ssim) * l1(est, meas) +
                          w.lambda_ssim * (1.0 - ssim(x, y, w));
  EXPECT_NEAR(image_loss(est, meas, w), expected, 1e-12);
}

TEST(ImageLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  RaImage est = random_image(14, 12, rng, 0.05, 0.9);
  const RaImage meas = random_image(14, 12, rng, 0.05, 0.9);
  LossWeights w;
  const auto res = image_loss_with_grad(est, meas, w);
  const double h = 1e-6;
  for (std::size_t i = 0; i < est.size(); i += 7) {
    const double orig = est.data()[i];
    est.data()[i] = orig + h;
    const double up = image_loss(est, meas, w);
    est.data()[i] = orig - h;
    const double down = image_loss(est, meas, w);
    est.data()[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double tol = 1e-5 * std::max(1.0, std::abs(fd));
    EXPECT_NEAR(res.grad.data()[i], fd, tol) << "pixel " << i;
  }
}

TEST(ScaleReg, ZeroWhenAllScalesWithinLimit) {
  GaussianScene scene;
  Gaussian2D g;
  g.scales = {0.3, 0.9};
  scene.gaussians = {g, g, g};
  EXPECT_DOUBLE_EQ(scale_reg(scene, 1.0), 0.0);
}

TEST(ScaleReg, SingleOversizedGaussian) {
  GaussianScene scene;
  Gaussian2D small;
  small.scales = {0.4, 0.4};
  Gaussian2D big;
  big.scales = {2.0, 0.3};  // excess 1.0 over the limit
  scene.gaussians = {small, big, small, small};
  EXPECT_DOUBLE_EQ(scale_reg(scene, 1.0), 1.0 / 4.0);
}

TEST(ScaleReg, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.5, 2.5);
  GaussianScene scene;
  for (int i = 0; i < 6; ++i) {
    Gaussian2D g;
    g.scales = {u(rng), u(rng)};
    scene.gaussians.push_back(g);
  }
  const auto res = scale_reg_with_grad(scene, 1.0);
  EXPECT_NEAR(res.loss, scale_reg(scene, 1.0), 1e-14);
  const double h = 1e-7;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      const double orig = scene.gaussians[i].scales[axis];
      scene.gaussians[i].scales[axis] = orig + h;
      const double up = scale_reg(scene, 1.0);
      scene.gaussians[i].scales[axis] = orig - h;
      const double down = scale_reg(scene, 1.0);
      scene.gaussians[i].scales[axis] = orig;
      EXPECT_NEAR(res.d_scales[i][axis], (up - down) / (2.0 * h), 1e-6);
    }
  }
}

TEST(StageLoss, PerfectRendersLeaveOnlyRegularizer) {
  std::mt19937_64 rng(23);
  const RaImage ra = random_image(16, 13, rng);
  RdImage rd(16, 13);
  for (std::size_t i = 0; i < rd.size(); ++i) rd.data()[i] = ra.data()[i];
  GaussianScene scene;
  Gaussian2D g;
  g.scales = {1.5, 0.2};
  scene.gaussians = {g};
  LossWeights w;
  const std::vector<FrameImages> frames = {{&ra, &rd}};
  EXPECT_NEAR(stage_loss(Stage::Pose, frames, frames, scene, w), 0.0, 1e-12);
  const double reg = w.lambda_sigma * scale_reg(scene, w.scale_limit);
  EXPECT_NEAR(stage_loss(Stage::Map, frames, frames, scene, w), reg, 1e-12);
  EXPECT_NEAR(stage_loss(Stage::Ba, frames, frames, scene, w), reg, 1e-12);
  EXPECT_GT(reg, 0.0);
}

TEST(StageLoss, MapIgnoresRdEvenWhenProvided) {
  std::mt19937_64 rng(29);
  const RaImage ra = random_image(16, 13, rng);
  const RdImage rd_est = [&] {
    RdImage img(16, 13);
    for (double& v : img.data()) v = 0.25;
    return img;
  }();
  RdImage rd_meas(16, 13, 0.75);
  GaussianScene scene;
  LossWeights w;
  const std::vector<FrameImages> renders = {{&ra, &rd_est}};
  const std::vector<FrameImages> meas = {{&ra, &rd_meas}};
  EXPECT_NEAR(stage_loss(Stage::Map, renders, meas, scene, w), 0.0, 1e-12);
  EXPECT_GT(stage_loss(Stage::Pose, renders, meas, scene, w), 0.0);
}

TEST(StageLoss, BaOnSingleKeyframeEqualsPosePlusRegularizer) {
  std::mt19937_64 rng(31);
  const RaImage ra_est = random_image(16, 13, rng);
  const RaImage ra_meas = random_image(16, 13, rng);
  const RdImage rd_est = [&] {
    RdImage img(16, 13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data()) v = u(rng);
    return img;
  }();
  const RdImage rd_meas = [&] {
    RdImage img(16, 13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : img.data()) v = u(rng);
    return img;
  }();
  GaussianScene scene;
  Gaussian2D g;
  g.scales = {1.8, 0.4};
  scene.gaussians = {g};
  LossWeights w;
  const std::vector<FrameImages> renders = {{&ra_est, &rd_est}};
  const std::vector<FrameImages> meas = {{&ra_meas, &rd_meas}};
  const double pose = stage_loss(Stage::Pose, renders, meas, scene, w);
  const double ba = stage_loss(Stage::Ba, renders, meas, scene, w);
  EXPECT_NEAR(ba, pose + w.lambda_sigma * scale_reg(scene, w.scale_limit), 1e-12);
}

TEST(StageLoss, AdditiveOverDisjointWindows) {
  std::mt19937_64 rng(37);
  std::vector<RaImage> est, meas;
  for (int i = 0; i < 4; ++i) {
    est.push_back(random_image(16, 13, rng));
    meas.push_back(random_image(16, 13, rng));
  }
  GaussianScene scene;
  LossWeights w;
  std::vector<FrameImages> r_all, m_all, r_a{{&est[0], nullptr}, {&est[1], nullptr}},
      m_a{{&meas[0], nullptr}, {&meas[1], nullptr}}, r_b{{&est[2], nullptr}, {&est[3], nullptr}},
      m_b{{&meas[2], nullptr}, {&meas[3], nullptr}};
  for (int i = 0; i < 4; ++i) {
    r_all.push_back({&est[i], nullptr});
    m_all.push_back({&meas[i], nullptr});
  }
  const double whole = stage_loss(Stage::Pose, r_all, m_all, scene, w);
  const double parts = stage_loss(Stage::Pose, r_a, m_a, scene, w) +
                       stage_loss(Stage::Pose, r_b, m_b, scene, w);
  EXPECT_NEAR(whole, parts, 1e-12);
}

TEST(StageLoss, EmptyWindowThrows) {
  GaussianScene scene;
  LossWeights w;
  EXPECT_THROW(stage_loss(Stage::Pose, {}, {}, scene, w), std::invalid_argument);
}
