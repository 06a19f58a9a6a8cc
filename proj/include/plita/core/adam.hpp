#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "plita/core/tensor.hpp"

namespace plita::core {

struct AdamConfig {
  double lr = 3e-4;
  double weight_decay = 1.5e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Thrown when a gradient holds NaN/Inf; no parameter has been touched.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::string parameter)
      : std::runtime_error("non-finite gradient in parameter '" + parameter + "'"), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

/// Adam with decoupled weight decay:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
///   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update to every parameter. Moment buffers are created on the
  /// first call and must keep matching the parameter shapes afterwards.
  void step(ParameterList<T>& params);

  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }
  /// Restores saved state; sizes are validated against `params`.
  void load_state(const ParameterList<T>& params, std::int64_t step, std::vector<std::vector<T>> m,
                  std::vector<std::vector<T>> v);

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace plita::core
