#pragma once

#include <vector>

#include "plita/core/tensor.hpp"

// Differentiable operations over Tensor<T>. Every op validates shapes and
// throws ShapeError naming the offending shapes. Axes may be negative.
namespace plita::core {

// Contractions.

/// [..., m, k] x [k, n] -> [..., n]; leading dims of `a` are flattened into rows.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Affine map x W + b with x [..., in], W [in, out], b [out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Batched product [B, m, k] x [B, k, n] -> [B, m, n]. With `transpose_b`
/// the right operand is [B, n, k].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

// Broadcasting arithmetic (numpy rules).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s);

// Elementwise maps.
template <typename T>
Tensor<T> neg(const Tensor<T>& a);
template <typename T>
Tensor<T> exp(const Tensor<T>& a);
template <typename T>
Tensor<T> log(const Tensor<T>& a);
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a);
template <typename T>
Tensor<T> square(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
/// tanh approximation of GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);
/// max(a, lo). Gradient passes where a >= lo.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, T lo);
/// Gradient passes where lo <= a <= hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

// Reductions.
template <typename T>
Tensor<T> sum(const Tensor<T>& a, int axis, bool keepdim = false);
template <typename T>
Tensor<T> mean(const Tensor<T>& a, int axis, bool keepdim = false);
template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& a);
/// Gradient goes to the first maximal element along the axis.
template <typename T>
Tensor<T> max(const Tensor<T>& a, int axis, bool keepdim = false);
/// Gradient goes to the first minimal element along the axis.
template <typename T>
Tensor<T> min(const Tensor<T>& a, int axis, bool keepdim = false);
/// Euclidean norm along `axis`. The gradient at a zero vector is zero.
template <typename T>
Tensor<T> l2_norm(const Tensor<T>& a, int axis, bool keepdim = false);

// Normalizations over the last axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a);
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

// Layout.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order);
template <typename T>
Tensor<T> transpose(const Tensor<T>& a, int axis0, int axis1);
/// Half-open range [start, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t start, std::size_t end);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

/// Same values, no graph edge back to `a`.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& a);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) {
  return div(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a) {
  return neg(a);
}

}  // namespace plita::core
