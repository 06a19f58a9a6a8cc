#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plita/core/ops.hpp"
#include "plita/core/rng.hpp"

namespace plita::losses {

using core::Tensor;

enum class Metric { Cosine, Euclidean };

inline constexpr double kEps = 1e-8;

/// Pairwise distances between rows of a (teacher, gradient-blocked) and b
/// (student). Inputs [N,d] or [B,N,d]; output [N,N] or [B,N,N].
/// Cosine: 1 - <a_i,b_j> / max(|a_i||b_j|, eps). Throws core::ShapeError on width mismatch.
template <typename T>
Tensor<T> cosine_distance_matrix(const Tensor<T>& a, const Tensor<T>& b, double eps = kEps);
/// |a_i - b_j|_2, same layout and stop-gradient on a.
template <typename T>
Tensor<T> euclidean_distance_matrix(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> distance_matrix(Metric metric, const Tensor<T>& a, const Tensor<T>& b);

/// Cross-record invariant loss per batch item:
/// 0.5 * (mean M(zeta1, q2) + mean M(zeta2, q1)), all N^2 entries. Inputs [B,N,d]; output [B].
template <typename T>
Tensor<T> loss_iv(const Tensor<T>& zeta1, const Tensor<T>& q2, const Tensor<T>& zeta2, const Tensor<T>& q1,
                  Metric metric = Metric::Cosine);

/// Target matrix |i-j|/(N-1), held as exact integer numerators over N-1.
class IdealTvMatrix {
 public:
  /// Throws std::invalid_argument for N < 2.
  explicit IdealTvMatrix(std::size_t n);
  std::size_t size() const { return n_; }
  std::size_t numerator(std::size_t i, std::size_t j) const { return i > j ? i - j : j - i; }
  std::size_t denominator() const { return n_ - 1; }
  template <typename T>
  Tensor<T> values() const;

 private:
  std::size_t n_;
};

/// Affine min-max map of each item's full matrix (diagonal included) onto
/// [1/(N-1), 1]; a constant matrix maps to 1/(N-1). Output clamped to the range.
/// Input [N,N] or [B,N,N].
template <typename T>
Tensor<T> rescale_tv(const Tensor<T>& m);

/// Throws std::invalid_argument unless offsets are strictly increasing.
void require_time_sorted(std::span<const std::size_t> offsets);

/// Off-diagonal mean of (M_ideal - rescale(m))^2 with the 1/(N(N-1)) prefactor.
/// m: [N,N] -> scalar shape [1], or [B,N,N] -> [B].
template <typename T>
Tensor<T> tv_matrix_loss(const Tensor<T>& m);

/// Within-record loss for one record: off-diagonal mean of (M_ideal - rescale(M(zeta, q)))^2
/// with the 1/(N(N-1)) prefactor. Inputs [B,N,d]; output [B].
template <typename T>
Tensor<T> loss_tv_record(const Tensor<T>& zeta, const Tensor<T>& q, Metric metric = Metric::Cosine);

/// 0.5 * (record 1 + record 2). When `offsets` is non-empty each entry must be time-sorted.
template <typename T>
Tensor<T> loss_tv(const Tensor<T>& zeta1, const Tensor<T>& q1, const Tensor<T>& zeta2, const Tensor<T>& q2,
                  Metric metric = Metric::Cosine, std::span<const std::vector<std::size_t>> offsets = {});

/// Batch mean of (l_iv + l_tv) over the enabled terms. Throws when both are disabled.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_iv, const Tensor<T>& l_tv, bool enable_iv = true, bool enable_tv = true);

struct AugmentConfig {
  bool reverse = false;
  bool flip = false;
};

/// Time reverse and/or negate, each with probability 0.5 when enabled.
/// Draws nothing from `rng` for disabled operations.
std::vector<float> augment(std::span<const float> strip, const AugmentConfig& cfg, core::Rng& rng);

}  // namespace plita::losses
