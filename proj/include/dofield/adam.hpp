#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dofield/tensor.hpp"

namespace dofield::ad {

template <typename Real>
struct AdamConfig {
  Real lr = Real(4e-5);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
};

// Standard Adam with bias correction over a fixed parameter list.
template <typename Real>
class Adam {
 public:
  Adam(std::vector<Tensor<Real>> params, AdamConfig<Real> config)
      : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      if (!p.requires_grad()) throw std::invalid_argument("Adam: parameter without requires_grad");
      m_.emplace_back(p.values().size(), Real(0));
      v_.emplace_back(p.values().size(), Real(0));
    }
  }

  void step() {
    ++t_;
    const Real bc1 = Real(1) - std::pow(config_.beta1, Real(t_));
    const Real bc2 = Real(1) - std::pow(config_.beta2, Real(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& value = params_[pi].values();
      const auto& grad = params_[pi].grads();
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const Real g = grad[i];
        m[i] = config_.beta1 * m[i] + (Real(1) - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (Real(1) - config_.beta2) * g * g;
        const Real m_hat = m[i] / bc1;
        const Real v_hat = v[i] / bc2;
        value[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::int64_t step_count() const { return t_; }
  const AdamConfig<Real>& config() const { return config_; }
  const std::vector<Real>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<Real>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Tensor<Real>> params_;
  AdamConfig<Real> config_;
  std::vector<std::vector<Real>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace dofield::ad
