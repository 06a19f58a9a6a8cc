#include "plita/losses/losses.hpp"

#include <algorithm>
#include <stdexcept>

namespace plita::losses {

using namespace core;

namespace {

template <typename T>
Tensor<T> as_batched(const Tensor<T>& x) {
  return x.dim() == 2 ? reshape(x, {1, x.size(0), x.size(1)}) : x;
}

template <typename T>
void check_pair(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim() < 2 || a.dim() > 3 || a.dim() != b.dim() || a.shape().back() != b.shape().back() ||
      (a.dim() == 3 && a.size(0) != b.size(0))) {
    throw ShapeError(std::string(op) + ": incompatible projections " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
}

template <typename T>
Tensor<T> unbatch_like(const Tensor<T>& m, const Tensor<T>& like) {
  return like.dim() == 2 ? reshape(m, {m.size(1), m.size(2)}) : m;
}

// [B,N,N] -> [B,1,1] reduced over both matrix axes.
template <typename T>
Tensor<T> matrix_reduce(const Tensor<T>& m, bool take_max) {
  const std::size_t b = m.size(0), n = m.size(1) * m.size(2);
  auto flat = reshape(m, {b, n});
  return reshape(take_max ? max(flat, 1) : min(flat, 1), {b, 1, 1});
}

}  // namespace

template <typename T>
Tensor<T> cosine_distance_matrix(const Tensor<T>& a_in, const Tensor<T>& b_in, double eps) {
  check_pair("cosine_distance_matrix", a_in, b_in);
  const auto a = as_batched(stop_gradient(a_in));
  const auto b = as_batched(b_in);
  const std::size_t batch = b.size(0), nb = b.size(1);
  auto dots = bmm(a, b, true);                                         // [B,Na,Nb]
  auto na = l2_norm(a, -1, true);                                      // [B,Na,1]
  auto nrm_b = reshape(l2_norm(b, -1), {batch, 1, nb});                // [B,1,Nb]
  auto denom = clamp_min(mul(na, nrm_b), static_cast<T>(eps));
  return unbatch_like(add_scalar(neg(div(dots, denom)), T(1)), a_in);
}

template <typename T>
Tensor<T> euclidean_distance_matrix(const Tensor<T>& a_in, const Tensor<T>& b_in) {
  check_pair("euclidean_distance_matrix", a_in, b_in);
  const auto a = as_batched(stop_gradient(a_in));
  const auto b = as_batched(b_in);
  const std::size_t batch = a.size(0), na = a.size(1), nb = b.size(1), d = a.size(2);
  auto diff = sub(reshape(a, {batch, na, 1, d}), reshape(b, {batch, 1, nb, d}));
  return unbatch_like(sqrt(sum(square(diff), -1)), a_in);
}

template <typename T>
Tensor<T> distance_matrix(Metric metric, const Tensor<T>& a, const Tensor<T>& b) {
  return metric == Metric::Cosine ? cosine_distance_matrix(a, b) : euclidean_distance_matrix(a, b);
}

template <typename T>
Tensor<T> loss_iv(const Tensor<T>& zeta1, const Tensor<T>& q2, const Tensor<T>& zeta2, const Tensor<T>& q1,
                  Metric metric) {
  if (zeta1.dim() != 3 || zeta1.shape() != q2.shape() || zeta2.shape() != q1.shape() ||
      zeta1.shape() != zeta2.shape()) {
    throw ShapeError("loss_iv: record projections differ: " + shape_str(zeta1.shape()) + " vs " +
                     shape_str(zeta2.shape()));
  }
  const std::size_t b = zeta1.size(0), n = zeta1.size(1);
  auto m12 = reshape(distance_matrix(metric, zeta1, q2), {b, n * n});
  auto m21 = reshape(distance_matrix(metric, zeta2, q1), {b, n * n});
  return mul_scalar(add(mean(m12, 1), mean(m21, 1)), T(0.5));
}

IdealTvMatrix::IdealTvMatrix(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("ideal tempo-variant matrix needs N >= 2, got N=" + std::to_string(n));
}

template <typename T>
Tensor<T> IdealTvMatrix::values() const {
  Tensor<T> m({n_, n_});
  auto d = m.mutable_data();
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) d[i * n_ + j] = static_cast<T>(numerator(i, j)) / static_cast<T>(denominator());
  }
  return m;
}

template <typename T>
Tensor<T> rescale_tv(const Tensor<T>& m_in) {
  const auto m = m_in.dim() == 2 ? reshape(m_in, {1, m_in.size(0), m_in.size(1)}) : m_in;
  if (m.dim() != 3 || m.size(1) != m.size(2)) throw ShapeError("rescale_tv expects square matrices, got " + shape_str(m_in.shape()));
  const std::size_t n = m.size(1);
  if (n < 2) throw std::invalid_argument("rescale_tv needs N >= 2");
  const T lo = T(1) / static_cast<T>(n - 1), hi = T(1);
  auto mn = matrix_reduce(m, false);
  auto mx = matrix_reduce(m, true);
  auto range = sub(mx, mn);
  // Degenerate items get a unit range so (m - min) / range = 0 maps them to `lo`.
  Tensor<T> bump(range.shape());
  for (std::size_t i = 0; i < range.numel(); ++i) bump.mutable_data()[i] = range.data()[i] == T(0) ? T(1) : T(0);
  auto scaled = add_scalar(mul_scalar(div(sub(m, mn), add(range, bump)), hi - lo), lo);
  auto out = clamp(scaled, lo, hi);
  return m_in.dim() == 2 ? reshape(out, {n, n}) : out;
}

void require_time_sorted(std::span<const std::size_t> offsets) {
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    if (offsets[i] <= offsets[i - 1]) {
      throw std::invalid_argument("tempo-variant loss needs time-sorted strips; offset " + std::to_string(i) + " (" +
                                  std::to_string(offsets[i]) + ") <= offset " + std::to_string(i - 1) + " (" +
                                  std::to_string(offsets[i - 1]) + ")");
    }
  }
}

template <typename T>
Tensor<T> tv_matrix_loss(const Tensor<T>& m_in) {
  const auto m = m_in.dim() == 2 ? reshape(m_in, {1, m_in.size(0), m_in.size(1)}) : m_in;
  const std::size_t b = m.size(0), n = m.size(1);
  const IdealTvMatrix ideal(n);
  Tensor<T> off_diag({n, n}, T(1));
  for (std::size_t i = 0; i < n; ++i) off_diag.mutable_data()[i * n + i] = T(0);
  auto err = mul(square(sub(ideal.values<T>(), rescale_tv(m))), off_diag);
  return mul_scalar(sum(reshape(err, {b, n * n}), 1), T(1) / static_cast<T>(n * (n - 1)));
}

template <typename T>
Tensor<T> loss_tv_record(const Tensor<T>& zeta, const Tensor<T>& q, Metric metric) {
  if (zeta.dim() != 3 || zeta.shape() != q.shape()) {
    throw ShapeError("loss_tv: projections differ: " + shape_str(zeta.shape()) + " vs " + shape_str(q.shape()));
  }
  return tv_matrix_loss(distance_matrix(metric, zeta, q));
}

template <typename T>
Tensor<T> loss_tv(const Tensor<T>& zeta1, const Tensor<T>& q1, const Tensor<T>& zeta2, const Tensor<T>& q2, Metric metric,
                  std::span<const std::vector<std::size_t>> offsets) {
  for (const auto& o : offsets) require_time_sorted(o);
  return mul_scalar(add(loss_tv_record(zeta1, q1, metric), loss_tv_record(zeta2, q2, metric)), T(0.5));
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_iv, const Tensor<T>& l_tv, bool enable_iv, bool enable_tv) {
  if (!enable_iv && !enable_tv) throw std::invalid_argument("total_loss: both loss terms disabled");
  if (enable_iv && enable_tv) return mean_all(add(l_iv, l_tv));
  return mean_all(enable_iv ? l_iv : l_tv);
}

std::vector<float> augment(std::span<const float> strip, const AugmentConfig& cfg, core::Rng& rng) {
  std::vector<float> out(strip.begin(), strip.end());
  if (cfg.reverse && uniform01(rng) < 0.5) std::reverse(out.begin(), out.end());
  if (cfg.flip && uniform01(rng) < 0.5) {
    for (float& v : out) v = -v;
  }
  return out;
}

#define PLITA_INSTANTIATE_LOSSES(T)                                                                              \
  template Tensor<T> cosine_distance_matrix(const Tensor<T>&, const Tensor<T>&, double);                         \
  template Tensor<T> euclidean_distance_matrix(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> distance_matrix(Metric, const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> loss_iv(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Metric);    \
  template Tensor<T> IdealTvMatrix::values<T>() const;                                                           \
  template Tensor<T> rescale_tv(const Tensor<T>&);                                                               \
  template Tensor<T> tv_matrix_loss(const Tensor<T>&);                                                          \
  template Tensor<T> loss_tv_record(const Tensor<T>&, const Tensor<T>&, Metric);                                 \
  template Tensor<T> loss_tv(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Metric,      \
                             std::span<const std::vector<std::size_t>>);                                         \
  template Tensor<T> total_loss(const Tensor<T>&, const Tensor<T>&, bool, bool);

PLITA_INSTANTIATE_LOSSES(float)
PLITA_INSTANTIATE_LOSSES(double)

}  // namespace plita::losses
