#include "plita/core/adam.hpp"

#include <cmath>

namespace plita::core {

template <typename T>
void Adam<T>::step(ParameterList<T>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.numel(), T(0));
      v_.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (m_.size() != params.size()) {
    throw std::invalid_argument("adam: parameter count changed from " + std::to_string(m_.size()) + " to " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].size() != params[i].tensor.numel()) {
      throw ShapeError("adam: moment buffer size mismatch for '" + params[i].name + "'");
    }
    for (T g : params[i].tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(params[i].name);
    }
  }

  ++step_;
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T lr = static_cast<T>(config_.lr);
  const T wd = static_cast<T>(config_.weight_decay);
  const T eps = static_cast<T>(config_.eps);
  const T bc1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(step_)));
  const T bc2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(step_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].tensor.mutable_data();
    auto g = params[i].tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[j]);
    }
  }
}

template <typename T>
void Adam<T>::load_state(const ParameterList<T>& params, std::int64_t step, std::vector<std::vector<T>> m,
                         std::vector<std::vector<T>> v) {
  if (m.size() != params.size() || v.size() != params.size()) {
    throw std::invalid_argument("adam: saved state holds " + std::to_string(m.size()) + " buffers for " +
                                std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m[i].size() != params[i].tensor.numel() || v[i].size() != params[i].tensor.numel()) {
      throw ShapeError("adam: saved moments do not match parameter '" + params[i].name + "' of shape " +
                       shape_str(params[i].tensor.shape()));
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace plita::core
