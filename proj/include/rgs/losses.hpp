#pragma once

#include "rgs/image.hpp"
#include "rgs/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace rgs {

/// Mixing weights for the reconstruction losses and regularizers.
struct LossWeights {
  double lambda_ssim = 0.2;   // SSIM share of the image loss, in [0, 1]
  double lambda_sigma = 0.1;  // scale regularizer weight
  int ssim_window = 11;       // odd
  double rd_weight = 1.0;     // RD-image loss weight relative to RA
  double scale_limit = 1.0;   // m; scales above this are penalized

  void validate() const {
    if (lambda_ssim < 0.0 || lambda_ssim > 1.0) {
      throw std::invalid_argument("LossWeights: lambda_ssim must be in [0, 1]");
    }
    if (lambda_sigma < 0.0) throw std::invalid_argument("LossWeights: lambda_sigma must be >= 0");
    if (ssim_window < 3 || ssim_window % 2 == 0) {
      throw std::invalid_argument("LossWeights: ssim_window must be odd and >= 3");
    }
    if (rd_weight < 0.0) throw std::invalid_argument("LossWeights: rd_weight must be >= 0");
    if (scale_limit <= 0.0) throw std::invalid_argument("LossWeights: scale_limit must be > 0");
  }
};

/// Mean absolute difference.
template <class Tag>
double l1(const Grid<Tag>& a, const Grid<Tag>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("l1: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a.data()[i] - b.data()[i]);
  return sum / static_cast<double>(a.size());
}

namespace detail {

struct ScratchTag {};
using Scratch = Grid<ScratchTag>;

inline std::vector<double> ssim_window_1d(int n) {
  const double sigma = n / 6.0;
  std::vector<double> w(n);
  double sum = 0.0;
  const double center = (n - 1) / 2.0;
  for (int i = 0; i < n; ++i) {
    const double d = i - center;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Separable valid-region correlation with a 1D kernel applied along both axes.
template <class Tag>
Scratch corr_valid(const Grid<Tag>& in, const std::vector<double>& w) {
  const int n = static_cast<int>(w.size());
  const int rows = in.rows(), cols = in.cols();
  Scratch tmp(rows, cols - n + 1);
  for (int r = 0; r < rows; ++r) {
    for (int c0 = 0; c0 + n <= cols; ++c0) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += w[j] * in(r, c0 + j);
      tmp(r, c0) = acc;
    }
  }
  Scratch out(rows - n + 1, cols - n + 1);
  for (int r0 = 0; r0 + n <= rows; ++r0) {
    for (int c0 = 0; c0 < tmp.cols(); ++c0) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += w[i] * tmp(r0 + i, c0);
      out(r0, c0) = acc;
    }
  }
  return out;
}

/// Adjoint of corr_valid: spreads a stats-grid field back onto the pixel grid.
inline Scratch corr_valid_adjoint(const Scratch& field, const std::vector<double>& w, int rows,
                                  int cols) {
  const int n = static_cast<int>(w.size());
  Scratch tmp(rows, field.cols());
  for (int r = 0; r < rows; ++r) {
    const int i_lo = std::max(0, r - (rows - n));
    const int i_hi = std::min(n - 1, r);
    for (int c0 = 0; c0 < field.cols(); ++c0) {
      double acc = 0.0;
      for (int i = i_lo; i <= i_hi; ++i) acc += w[i] * field(r - i, c0);
      tmp(r, c0) = acc;
    }
  }
  Scratch out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int j_lo = std::max(0, c - (cols - n));
      const int j_hi = std::min(n - 1, c);
      double acc = 0.0;
      for (int j = j_lo; j <= j_hi; ++j) acc += w[j] * tmp(r, c - j);
      out(r, c) = acc;
    }
  }
  return out;
}

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

template <class Tag>
struct SsimEval {
  double value = 0.0;
  Grid<Tag> grad;  // d mean-SSIM / d first image, empty unless requested
};

/// Mean local SSIM over the valid window positions; inputs are expected in
/// [0, 1]. When with_grad is set, also returns the gradient w.r.t. `x`.
template <class Tag>
SsimEval<Tag> ssim_eval(const Grid<Tag>& x, const Grid<Tag>& y, int window, bool with_grad) {
  if (!x.same_shape(y)) throw std::invalid_argument("ssim: shape mismatch");
  if (x.rows() < window || x.cols() < window) {
    throw std::invalid_argument("ssim: image smaller than window");
  }
  const std::vector<double> w = ssim_window_1d(window);

  Grid<Tag> xx(x.rows(), x.cols()), yy(x.rows(), x.cols()), xy(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xv = x.data()[i], yv = y.data()[i];
    xx.data()[i] = xv * xv;
    yy.data()[i] = yv * yv;
    xy.data()[i] = xv * yv;
  }
  const Scratch mu1 = corr_valid(x, w);
  const Scratch mu2 = corr_valid(y, w);
  const Scratch m11 = corr_valid(xx, w);
  const Scratch m22 = corr_valid(yy, w);
  const Scratch m12 = corr_valid(xy, w);

  const int P = mu1.rows() * mu1.cols();
  Scratch fa(mu1.rows(), mu1.cols()), fb(mu1.rows(), mu1.cols()), fc(mu1.rows(), mu1.cols());
  double total = 0.0;
  for (int r = 0; r < mu1.rows(); ++r) {
    for (int c = 0; c < mu1.cols(); ++c) {
      const double u1 = mu1(r, c), u2 = mu2(r, c);
      const double s1 = m11(r, c) - u1 * u1;
      const double s2 = m22(r, c) - u2 * u2;
      const double s12 = m12(r, c) - u1 * u2;
      const double a1 = 2.0 * u1 * u2 + kSsimC1;
      const double a2 = 2.0 * s12 + kSsimC2;
      const double b1 = u1 * u1 + u2 * u2 + kSsimC1;
      const double b2 = s1 + s2 + kSsimC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (with_grad) {
        const double ds_du1 = (2.0 * u2 * b1 - 2.0 * u1 * a1) * a2 / (b1 * b1 * b2);
        const double ds_ds1 = -s / b2;
        const double ds_ds12 = 2.0 * a1 / (b1 * b2);
        fa(r, c) = ds_du1 - 2.0 * u1 * ds_ds1 - u2 * ds_ds12;
        fb(r, c) = 2.0 * ds_ds1;
        fc(r, c) = ds_ds12;
      }
    }
  }

  SsimEval<Tag> out;
  out.value = total / P;
  if (with_grad) {
    const Scratch ga = corr_valid_adjoint(fa, w, x.rows(), x.cols());
    const Scratch gb = corr_valid_adjoint(fb, w, x.rows(), x.cols());
    const Scratch gc = corr_valid_adjoint(fc, w, x.rows(), x.cols());
    out.grad = Grid<Tag>(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.grad.data()[i] =
          (ga.data()[i] + x.data()[i] * gb.data()[i] + y.data()[i] * gc.data()[i]) / P;
    }
  }
  return out;
}

/// 99.9th percentile of the grid values (nearest-rank with rounding).
template <class Tag>
double dynamic_range_scale(const Grid<Tag>& img) {
  if (img.empty()) return 1.0;
  std::vector<double> v = img.data();
  const auto idx = static_cast<std::size_t>(std::llround(0.999 * (v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + idx, v.end());
  return v[idx];
}

}  // namespace detail

/// Mean local SSIM with a Gaussian window; inputs are expected pre-normalized
/// to [0, 1] by a shared dynamic range.
template <class Tag>
double ssim(const Grid<Tag>& a, const Grid<Tag>& b, const LossWeights& w) {
  return detail::ssim_eval(a, b, w.ssim_window, false).value;
}

/// (1 - lambda) * L1 + lambda * (1 - SSIM), with both images normalized by the
/// 99.9th percentile of the measured image for the SSIM term.
template <class Tag>
double image_loss(const Grid<Tag>& est, const Grid<Tag>& meas, const LossWeights& w) {
  double loss = (1.0 - w.lambda_ssim) * l1(est, meas);
  if (w.lambda_ssim > 0.0) {
    double q = detail::dynamic_range_scale(meas);
    if (q <= 0.0) q = 1.0;
    Grid<Tag> x(est.rows(), est.cols()), y(est.rows(), est.cols());
    for (std::size_t i = 0; i < est.size(); ++i) {
      x.data()[i] = std::clamp(est.data()[i] / q, 0.0, 1.0);
      y.data()[i] = std::clamp(meas.data()[i] / q, 0.0, 1.0);
    }
    loss += w.lambda_ssim * (1.0 - detail::ssim_eval(x, y, w.ssim_window, false).value);
  }
  return loss;
}

template <class Tag>
struct ImageLossGrad {
  double loss = 0.0;
  Grid<Tag> grad;  // d loss / d estimated image
};

template <class Tag>
ImageLossGrad<Tag> image_loss_with_grad(const Grid<Tag>& est, const Grid<Tag>& meas,
                                        const LossWeights& w) {
  if (!est.same_shape(meas)) throw std::invalid_argument("image_loss: shape mismatch");
  ImageLossGrad<Tag> out;
  out.grad = Grid<Tag>(est.rows(), est.cols());
  const double n = static_cast<double>(est.size());
  double l1_sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double d = est.data()[i] - meas.data()[i];
    l1_sum += std::abs(d);
    out.grad.data()[i] = (1.0 - w.lambda_ssim) * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
  }
  out.loss = (1.0 - w.lambda_ssim) * l1_sum / n;

  if (w.lambda_ssim > 0.0) {
    double q = detail::dynamic_range_scale(meas);
    if (q <= 0.0) q = 1.0;
    Grid<Tag> x(est.rows(), est.cols()), y(est.rows(), est.cols());
    for (std::size_t i = 0; i < est.size(); ++i) {
      x.data()[i] = std::clamp(est.data()[i] / q, 0.0, 1.0);
      y.data()[i] = std::clamp(meas.data()[i] / q, 0.0, 1.0);
    }
    const auto s = detail::ssim_eval(x, y, w.ssim_window, true);
    out.loss += w.lambda_ssim * (1.0 - s.value);
    for (std::size_t i = 0; i < est.size(); ++i) {
      if (est.data()[i] / q < 1.0) {  // clamped pixels carry no gradient
        out.grad.data()[i] += w.lambda_ssim * (-s.grad.data()[i]) / q;
      }
    }
  }
  return out;
}

/// Mean over Gaussians of max(0, max(scales) - scale_limit)^2.
inline double scale_reg(const GaussianScene& scene, double scale_limit) {
  if (scene.empty()) return 0.0;
  double sum = 0.0;
  for (const Gaussian2D& g : scene.gaussians) {
    const double excess = std::max(0.0, g.scales.maxCoeff() - scale_limit);
    sum += excess * excess;
  }
  return sum / static_cast<double>(scene.size());
}

struct SceneRegGrad {
  double loss = 0.0;
  std::vector<Eigen::Vector2d> d_scales;
};

inline SceneRegGrad scale_reg_with_grad(const GaussianScene& scene, double scale_limit) {
  SceneRegGrad out;
  out.d_scales.assign(scene.size(), Eigen::Vector2d::Zero());
  if (scene.empty()) return out;
  const double n = static_cast<double>(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::Vector2d& s = scene.gaussians[i].scales;
    const int arg = s.x() >= s.y() ? 0 : 1;
    const double excess = s[arg] - scale_limit;
    if (excess > 0.0) {
      out.loss += excess * excess / n;
      out.d_scales[i][arg] = 2.0 * excess / n;
    }
  }
  return out;
}

enum class Stage { Pose, Map, Ba };

/// Rendered/measured image pair for one keyframe; rd may be null (no Doppler
/// term, e.g. the first keyframe of a run).
struct FrameImages {
  const RaImage* ra = nullptr;
  const RdImage* rd = nullptr;
};

/// Stage objectives: Pose and Ba sum RA and weighted RD losses, Map uses the
/// RA geometry loss only; Map and Ba add the scale regularizer.
inline double stage_loss(Stage stage, const std::vector<FrameImages>& renders,
                         const std::vector<FrameImages>& measurements, const GaussianScene& scene,
                         const LossWeights& w) {
  if (renders.empty() || renders.size() != measurements.size()) {
    throw std::invalid_argument("stage_loss: empty or mismatched keyframe window");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < renders.size(); ++i) {
    if (renders[i].ra == nullptr || measurements[i].ra == nullptr) {
      throw std::invalid_argument("stage_loss: missing RA image");
    }
    loss += image_loss(*renders[i].ra, *measurements[i].ra, w);
    if (stage != Stage::Map && renders[i].rd != nullptr && measurements[i].rd != nullptr) {
      loss += w.rd_weight * image_loss(*renders[i].rd, *measurements[i].rd, w);
    }
  }
  if (stage != Stage::Pose) loss += w.lambda_sigma * scale_reg(scene, w.scale_limit);
  return loss;
}

}  // namespace rgs
