#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace rgs {

/// Adam with bias correction and a per-element learning rate, so one instance
/// can drive several parameter groups packed into a single vector.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, double beta1, double beta2, double eps)
      : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw std::invalid_argument("AdamOptimizer: betas must be in (0, 1)");
    }
    if (eps <= 0.0) throw std::invalid_argument("AdamOptimizer: eps must be > 0");
  }

  std::size_t size() const { return m_.size(); }

  void step(std::span<const double> grad, std::span<const double> lr, std::span<double> params) {
    if (grad.size() != m_.size() || lr.size() != m_.size() || params.size() != m_.size()) {
      throw std::invalid_argument("AdamOptimizer: size mismatch");
    }
    ++t_;
    const double corr1 = 1.0 - std::pow(beta1_, t_);
    const double corr2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double m_hat = m_[i] / corr1;
      const double v_hat = v_[i] / corr2;
      params[i] -= lr[i] * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace rgs
