#include "plita/core/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace plita::core {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
template <typename T>
using ArrMap = Eigen::Map<Arr<T>>;
template <typename T>
using CArrMap = Eigen::Map<const Arr<T>>;

std::size_t norm_axis(int axis, std::size_t rank, const Shape& shape) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  return static_cast<std::size_t>(a);
}

struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

template <typename T>
void accumulate(const ImplPtr<T>& t, const Buffer<T>& g) {
  auto& dst = t->ensure_grad();
  ArrMap<T>(dst.data(), static_cast<Eigen::Index>(dst.size())) +=
      CArrMap<T>(g.data(), static_cast<Eigen::Index>(g.size()));
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
  bool same = false;
};

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  p.out.assign(r, 1);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  std::vector<std::size_t> da(r, 1), db(r, 1);
  std::copy(a.begin(), a.end(), da.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), db.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  for (std::size_t i = 0; i < r; ++i) {
    if (da[i] != db[i] && da[i] != 1 && db[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(da[i], db[i]);
  }
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = r; i-- > 0;) {
    p.stride_a[i] = da[i] == 1 ? 0 : sa;
    p.stride_b[i] = db[i] == 1 ? 0 : sb;
    sa *= da[i];
    sb *= db[i];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <typename F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t total = shape_numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  const std::size_t inner = p.out[r - 1];
  const std::size_t sai = p.stride_a[r - 1], sbi = p.stride_b[r - 1];
  if (inner == 0) return;
  const std::size_t outer = total / inner;
  std::vector<std::size_t> idx(r, 0);
  std::size_t oa = 0, ob = 0, o = 0;
  for (std::size_t it = 0; it < outer; ++it) {
    std::size_t ia = oa, ib = ob;
    for (std::size_t j = 0; j < inner; ++j) {
      f(o++, ia, ib);
      ia += sai;
      ib += sbi;
    }
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      oa += p.stride_a[d];
      ob += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      oa -= p.stride_a[d] * p.out[d];
      ob -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

template <BinOp Op, typename T>
T apply(T x, T y) {
  if constexpr (Op == BinOp::kAdd) return x + y;
  if constexpr (Op == BinOp::kSub) return x - y;
  if constexpr (Op == BinOp::kMul) return x * y;
  if constexpr (Op == BinOp::kDiv) return x / y;
}

constexpr const char* bin_name(BinOp op) {
  switch (op) {
    case BinOp::kAdd: return "add";
    case BinOp::kSub: return "sub";
    case BinOp::kMul: return "mul";
    case BinOp::kDiv: return "div";
  }
  return "?";
}

template <BinOp Op, typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), bin_name(Op)));
  Buffer<T> out(shape_numel(plan->out));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for_each_broadcast(*plan, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = apply<Op>(pa[ia], pb[ib]); });

  auto ia = a.impl();
  auto ib = b.impl();
  return make_result<T>(plan->out, std::move(out), {a, b}, bin_name(Op), [ia, ib, plan](const TensorImpl<T>& res) {
    const T* g = res.grad.data();
    const T* va = ia->data.data();
    const T* vb = ib->data.data();
    if (ia->requires_grad) {
      T* ga = ia->ensure_grad().data();
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t xa, std::size_t xb) {
        if constexpr (Op == BinOp::kAdd || Op == BinOp::kSub) ga[xa] += g[o];
        if constexpr (Op == BinOp::kMul) ga[xa] += g[o] * vb[xb];
        if constexpr (Op == BinOp::kDiv) ga[xa] += g[o] / vb[xb];
      });
    }
    if (ib->requires_grad) {
      T* gb = ib->ensure_grad().data();
      for_each_broadcast(*plan, [&](std::size_t o, std::size_t xa, std::size_t xb) {
        if constexpr (Op == BinOp::kAdd) gb[xb] += g[o];
        if constexpr (Op == BinOp::kSub) gb[xb] -= g[o];
        if constexpr (Op == BinOp::kMul) gb[xb] += g[o] * va[xa];
        if constexpr (Op == BinOp::kDiv) gb[xb] -= g[o] * va[xa] / (vb[xb] * vb[xb]);
      });
    }
  });
}

// Elementwise map whose derivative is expressed through input x, output y.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, const char* name, Fwd fwd, Deriv deriv) {
  Buffer<T> out(a.numel());
  const T* pa = a.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(pa[i]);
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, name, [ia, deriv](const TensorImpl<T>& res) {
    auto& ga = ia->ensure_grad();
    const T* g = res.grad.data();
    const T* x = ia->data.data();
    const T* y = res.data.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

template <typename T>
Eigen::Index eidx(std::size_t n) {
  return static_cast<Eigen::Index>(n);
}

}  // namespace

// ---------------------------------------------------------------------------
// Contractions

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim() < 1 || b.dim() != 2 || a.shape().back() != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t k = b.shape()[0], n = b.shape()[1];
  const std::size_t m = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  Buffer<T> out(m * n);
  MatMap<T>(out.data(), eidx<T>(m), eidx<T>(n)).noalias() =
      CMatMap<T>(a.data().data(), eidx<T>(m), eidx<T>(k)) * CMatMap<T>(b.data().data(), eidx<T>(k), eidx<T>(n));
  auto ia = a.impl();
  auto ib = b.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {a, b}, "matmul",
                        [ia, ib, m, k, n](const TensorImpl<T>& res) {
                          CMatMap<T> g(res.grad.data(), eidx<T>(m), eidx<T>(n));
                          if (ia->requires_grad) {
                            MatMap<T>(ia->ensure_grad().data(), eidx<T>(m), eidx<T>(k)).noalias() +=
                                g * CMatMap<T>(ib->data.data(), eidx<T>(k), eidx<T>(n)).transpose();
                          }
                          if (ib->requires_grad) {
                            MatMap<T>(ib->ensure_grad().data(), eidx<T>(k), eidx<T>(n)).noalias() +=
                                CMatMap<T>(ia->data.data(), eidx<T>(m), eidx<T>(k)).transpose() * g;
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.dim() < 1 || weight.dim() != 2 || bias.dim() != 1 || x.shape().back() != weight.shape()[0] ||
      bias.shape()[0] != weight.shape()[1]) {
    throw ShapeError("linear: incompatible shapes x=" + shape_str(x.shape()) + " W=" + shape_str(weight.shape()) +
                     " b=" + shape_str(bias.shape()));
  }
  const std::size_t k = weight.shape()[0], n = weight.shape()[1];
  const std::size_t m = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Buffer<T> out(m * n);
  MatMap<T> o(out.data(), eidx<T>(m), eidx<T>(n));
  o.noalias() = CMatMap<T>(x.data().data(), eidx<T>(m), eidx<T>(k)) *
                CMatMap<T>(weight.data().data(), eidx<T>(k), eidx<T>(n));
  o.rowwise() += CMatMap<T>(bias.data().data(), 1, eidx<T>(n)).row(0);
  auto ix = x.impl();
  auto iw = weight.impl();
  auto ibias = bias.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {x, weight, bias}, "linear",
                        [ix, iw, ibias, m, k, n](const TensorImpl<T>& res) {
                          CMatMap<T> g(res.grad.data(), eidx<T>(m), eidx<T>(n));
                          if (ix->requires_grad) {
                            MatMap<T>(ix->ensure_grad().data(), eidx<T>(m), eidx<T>(k)).noalias() +=
                                g * CMatMap<T>(iw->data.data(), eidx<T>(k), eidx<T>(n)).transpose();
                          }
                          if (iw->requires_grad) {
                            MatMap<T>(iw->ensure_grad().data(), eidx<T>(k), eidx<T>(n)).noalias() +=
                                CMatMap<T>(ix->data.data(), eidx<T>(m), eidx<T>(k)).transpose() * g;
                          }
                          if (ibias->requires_grad) {
                            MatMap<T>(ibias->ensure_grad().data(), 1, eidx<T>(n)) += g.colwise().sum();
                          }
                        });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.dim() != 3 || b.dim() != 3 || a.shape()[0] != b.shape()[0] ||
      a.shape()[2] != (transpose_b ? b.shape()[2] : b.shape()[1])) {
    throw ShapeError(std::string("bmm") + (transpose_b ? " (transposed rhs)" : "") + ": incompatible shapes " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t n = transpose_b ? b.shape()[1] : b.shape()[2];
  Buffer<T> out(batch * m * n);
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    CMatMap<T> am(pa + s * m * k, eidx<T>(m), eidx<T>(k));
    MatMap<T> om(out.data() + s * m * n, eidx<T>(m), eidx<T>(n));
    if (transpose_b) {
      om.noalias() = am * CMatMap<T>(pb + s * n * k, eidx<T>(n), eidx<T>(k)).transpose();
    } else {
      om.noalias() = am * CMatMap<T>(pb + s * k * n, eidx<T>(k), eidx<T>(n));
    }
  }
  auto ia = a.impl();
  auto ib = b.impl();
  return make_result<T>(Shape{batch, m, n}, std::move(out), {a, b}, "bmm",
                        [ia, ib, batch, m, k, n, transpose_b](const TensorImpl<T>& res) {
                          const T* g = res.grad.data();
                          T* ga = ia->requires_grad ? ia->ensure_grad().data() : nullptr;
                          T* gb = ib->requires_grad ? ib->ensure_grad().data() : nullptr;
                          for (std::size_t s = 0; s < batch; ++s) {
                            CMatMap<T> gm(g + s * m * n, eidx<T>(m), eidx<T>(n));
                            CMatMap<T> am(ia->data.data() + s * m * k, eidx<T>(m), eidx<T>(k));
                            if (transpose_b) {
                              CMatMap<T> bm(ib->data.data() + s * n * k, eidx<T>(n), eidx<T>(k));
                              if (ga) MatMap<T>(ga + s * m * k, eidx<T>(m), eidx<T>(k)).noalias() += gm * bm;
                              if (gb) MatMap<T>(gb + s * n * k, eidx<T>(n), eidx<T>(k)).noalias() += gm.transpose() * am;
                            } else {
                              CMatMap<T> bm(ib->data.data() + s * k * n, eidx<T>(k), eidx<T>(n));
                              if (ga) MatMap<T>(ga + s * m * k, eidx<T>(m), eidx<T>(k)).noalias() += gm * bm.transpose();
                              if (gb) MatMap<T>(gb + s * k * n, eidx<T>(k), eidx<T>(n)).noalias() += am.transpose() * gm;
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<BinOp::kAdd>(a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<BinOp::kSub>(a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<BinOp::kMul>(a, b);
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<BinOp::kDiv>(a, b);
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return unary(a, "mul_scalar", [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  Buffer<T> out(a.numel());
  ArrMap<T>(out.data(), eidx<T>(out.size())) = CArrMap<T>(a.data().data(), eidx<T>(out.size())).exp();
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, "exp", [ia](const TensorImpl<T>& res) {
    auto& ga = ia->ensure_grad();
    const auto n = eidx<T>(ga.size());
    ArrMap<T>(ga.data(), n) += CArrMap<T>(res.grad.data(), n) * CArrMap<T>(res.data.data(), n);
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(a, "log", [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return unary(a, "sqrt", [](T x) { return std::sqrt(x); },
               [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return unary(a, "square", [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  Buffer<T> out(a.numel());
  ArrMap<T>(out.data(), eidx<T>(out.size())) = CArrMap<T>(a.data().data(), eidx<T>(out.size())).tanh();
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, "tanh", [ia](const TensorImpl<T>& res) {
    auto& ga = ia->ensure_grad();
    const auto n = eidx<T>(ga.size());
    CArrMap<T> y(res.data.data(), n);
    ArrMap<T>(ga.data(), n) += CArrMap<T>(res.grad.data(), n) * (T(1) - y * y);
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Buffer<T> out(a.numel());
  const auto n = eidx<T>(out.size());
  ArrMap<T>(out.data(), n) = T(1) / (T(1) + (-CArrMap<T>(a.data().data(), n)).exp());
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, "sigmoid", [ia](const TensorImpl<T>& res) {
    auto& ga = ia->ensure_grad();
    const auto m = eidx<T>(ga.size());
    CArrMap<T> y(res.data.data(), m);
    ArrMap<T>(ga.data(), m) += CArrMap<T>(res.grad.data(), m) * y * (T(1) - y);
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary(a, "relu", [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  static constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  static constexpr T kA = T(0.044715);
  const auto n = eidx<T>(a.numel());
  CArrMap<T> x(a.data().data(), n);
  auto t = std::make_shared<Buffer<T>>(a.numel());
  ArrMap<T> tm(t->data(), n);
  tm = (kC * (x + kA * x * x * x)).tanh();
  Buffer<T> out(a.numel());
  ArrMap<T>(out.data(), n) = T(0.5) * x * (T(1) + tm);
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, "gelu", [ia, t, n](const TensorImpl<T>& res) {
    CArrMap<T> xv(ia->data.data(), n);
    CArrMap<T> tv(t->data(), n);
    auto& ga = ia->ensure_grad();
    ArrMap<T>(ga.data(), n) +=
        CArrMap<T>(res.grad.data(), n) *
        (T(0.5) * (T(1) + tv) + T(0.5) * xv * (T(1) - tv * tv) * kC * (T(1) + T(3) * kA * xv * xv));
  });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return unary(a, "clamp", [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
               [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, T lo) {
  return clamp(a, lo, std::numeric_limits<T>::infinity());
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a, int axis, bool keepdim) {
  const std::size_t ax = norm_axis(axis, a.dim(), a.shape());
  const AxisView v = axis_view(a.shape(), ax);
  Buffer<T> out(v.outer * v.inner, T(0));
  const T* pa = a.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t l = 0; l < v.len; ++l) {
      const T* row = pa + (o * v.len + l) * v.inner;
      T* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += row[i];
    }
  }
  auto ia = a.impl();
  return make_result<T>(reduced_shape(a.shape(), ax, keepdim), std::move(out), {a}, "sum",
                        [ia, v](const TensorImpl<T>& res) {
                          T* ga = ia->ensure_grad().data();
                          const T* g = res.grad.data();
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            for (std::size_t l = 0; l < v.len; ++l) {
                              T* row = ga + (o * v.len + l) * v.inner;
                              const T* src = g + o * v.inner;
                              for (std::size_t i = 0; i < v.inner; ++i) row[i] += src[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, int axis, bool keepdim) {
  const std::size_t ax = norm_axis(axis, a.dim(), a.shape());
  const std::size_t len = a.shape()[ax];
  if (len == 0) throw ShapeError("mean over empty axis of " + shape_str(a.shape()));
  return mul_scalar(sum(a, axis, keepdim), T(1) / static_cast<T>(len));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T total = T(0);
  for (T x : a.data()) total += x;
  auto ia = a.impl();
  return make_result<T>(Shape{}, Buffer<T>{total}, {a}, "sum_all", [ia](const TensorImpl<T>& res) {
    auto& ga = ia->ensure_grad();
    const T g = res.grad[0];
    for (auto& x : ga) x += g;
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean_all of empty tensor");
  return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

namespace {

template <typename T, typename Better>
Tensor<T> arg_reduce(const Tensor<T>& a, int axis, bool keepdim, const char* name, Better better) {
  const std::size_t ax = norm_axis(axis, a.dim(), a.shape());
  const AxisView v = axis_view(a.shape(), ax);
  if (v.len == 0) throw ShapeError(std::string(name) + " over empty axis of " + shape_str(a.shape()));
  Buffer<T> out(v.outer * v.inner);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  const T* pa = a.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      std::size_t best = 0;
      T val = pa[o * v.len * v.inner + i];
      for (std::size_t l = 1; l < v.len; ++l) {
        const T x = pa[(o * v.len + l) * v.inner + i];
        if (better(x, val)) {
          val = x;
          best = l;
        }
      }
      out[o * v.inner + i] = val;
      (*arg)[o * v.inner + i] = (o * v.len + best) * v.inner + i;
    }
  }
  auto ia = a.impl();
  return make_result<T>(reduced_shape(a.shape(), ax, keepdim), std::move(out), {a}, name,
                        [ia, arg](const TensorImpl<T>& res) {
                          T* ga = ia->ensure_grad().data();
                          for (std::size_t j = 0; j < arg->size(); ++j) ga[(*arg)[j]] += res.grad[j];
                        });
}

}  // namespace

template <typename T>
Tensor<T> max(const Tensor<T>& a, int axis, bool keepdim) {
  return arg_reduce(a, axis, keepdim, "max", [](T x, T best) { return x > best; });
}

template <typename T>
Tensor<T> min(const Tensor<T>& a, int axis, bool keepdim) {
  return arg_reduce(a, axis, keepdim, "min", [](T x, T best) { return x < best; });
}

template <typename T>
Tensor<T> l2_norm(const Tensor<T>& a, int axis, bool keepdim) {
  const std::size_t ax = norm_axis(axis, a.dim(), a.shape());
  const AxisView v = axis_view(a.shape(), ax);
  Buffer<T> out(v.outer * v.inner, T(0));
  const T* pa = a.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t l = 0; l < v.len; ++l) {
      const T* row = pa + (o * v.len + l) * v.inner;
      T* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += row[i] * row[i];
    }
  }
  for (auto& x : out) x = std::sqrt(x);
  auto ia = a.impl();
  return make_result<T>(reduced_shape(a.shape(), ax, keepdim), std::move(out), {a}, "l2_norm",
                        [ia, v](const TensorImpl<T>& res) {
                          T* ga = ia->ensure_grad().data();
                          const T* x = ia->data.data();
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            for (std::size_t i = 0; i < v.inner; ++i) {
                              const T nrm = res.data[o * v.inner + i];
                              if (!(nrm > T(0))) continue;
                              const T scale = res.grad[o * v.inner + i] / nrm;
                              for (std::size_t l = 0; l < v.len; ++l) {
                                const std::size_t j = (o * v.len + l) * v.inner + i;
                                ga[j] += scale * x[j];
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Normalizations

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.dim() == 0) throw ShapeError("softmax of a scalar");
  const std::size_t d = a.shape().back();
  const std::size_t rows = d ? a.numel() / d : 0;
  Buffer<T> out(a.data().begin(), a.data().end());
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data() + r * d;
    const T mx = *std::max_element(row, row + d);
    for (std::size_t j = 0; j < d; ++j) row[j] -= mx;
  }
  ArrMap<T> all(out.data(), eidx<T>(out.size()));
  all = all.exp();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.data() + r * d;
    T s = T(0);
    for (std::size_t j = 0; j < d; ++j) s += row[j];
    const T inv = T(1) / s;
    for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
  }
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, "softmax", [ia, rows, d](const TensorImpl<T>& res) {
    T* ga = ia->ensure_grad().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = res.data.data() + r * d;
      const T* g = res.grad.data() + r * d;
      T dot = T(0);
      for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
      T* dst = ga + r * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  if (a.dim() == 0) throw ShapeError("log_softmax of a scalar");
  const std::size_t d = a.shape().back();
  const std::size_t rows = d ? a.numel() / d : 0;
  Buffer<T> out(a.numel());
  const T* pa = a.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = pa + r * d;
    const T mx = *std::max_element(row, row + d);
    T s = T(0);
    for (std::size_t j = 0; j < d; ++j) s += std::exp(row[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = row[j] - lse;
  }
  auto ia = a.impl();
  return make_result<T>(a.shape(), std::move(out), {a}, "log_softmax", [ia, rows, d](const TensorImpl<T>& res) {
    T* ga = ia->ensure_grad().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = res.data.data() + r * d;
      const T* g = res.grad.data() + r * d;
      T gs = T(0);
      for (std::size_t j = 0; j < d; ++j) gs += g[j];
      for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.dim() < 1 || gamma.dim() != 1 || beta.dim() != 1 || gamma.shape()[0] != x.shape().back() ||
      beta.shape()[0] != x.shape().back()) {
    throw ShapeError("layer_norm: incompatible shapes x=" + shape_str(x.shape()) + " gamma=" +
                     shape_str(gamma.shape()) + " beta=" + shape_str(beta.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  Buffer<T> out(x.numel());
  auto xhat = std::make_shared<Buffer<T>>(x.numel());
  auto rstd = std::make_shared<Buffer<T>>(rows);
  const T* px = x.data().data();
  const T* pg = gamma.data().data();
  const T* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * pg[j] + pb[j];
    }
  }
  auto ix = x.impl();
  auto ig = gamma.impl();
  auto ib = beta.impl();
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
                        [ix, ig, ib, xhat, rstd, rows, d](const TensorImpl<T>& res) {
                          const T* g = res.grad.data();
                          const T* gm = ig->data.data();
                          if (ig->requires_grad || ib->requires_grad) {
                            T* gg = ig->requires_grad ? ig->ensure_grad().data() : nullptr;
                            T* gb = ib->requires_grad ? ib->ensure_grad().data() : nullptr;
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t j = 0; j < d; ++j) {
                                if (gg) gg[j] += g[r * d + j] * (*xhat)[r * d + j];
                                if (gb) gb[j] += g[r * d + j];
                              }
                            }
                          }
                          if (ix->requires_grad) {
                            T* gx = ix->ensure_grad().data();
                            const T inv_d = T(1) / static_cast<T>(d);
                            for (std::size_t r = 0; r < rows; ++r) {
                              T s1 = T(0), s2 = T(0);
                              for (std::size_t j = 0; j < d; ++j) {
                                const T gh = g[r * d + j] * gm[j];
                                s1 += gh;
                                s2 += gh * (*xhat)[r * d + j];
                              }
                              const T rs = (*rstd)[r];
                              for (std::size_t j = 0; j < d; ++j) {
                                const T gh = g[r * d + j] * gm[j];
                                gx[r * d + j] += rs * (gh - inv_d * s1 - (*xhat)[r * d + j] * inv_d * s2);
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto ia = a.impl();
  return make_result<T>(std::move(shape), Buffer<T>(a.data().begin(), a.data().end()), {a}, "reshape",
                        [ia](const TensorImpl<T>& res) { accumulate(ia, res.grad); });
}

namespace {

// Gathers `src` (shape `in`) into permuted layout; `scatter` reverses it.
template <typename T, bool Scatter>
void permute_copy(const Shape& in, const std::vector<std::size_t>& order, const T* src, T* dst) {
  const std::size_t r = in.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[order[i]];
    stride[i] = in_stride[order[i]];
  }
  const std::size_t total = shape_numel(in);
  if (total == 0) return;
  const std::size_t inner = out[r - 1], inner_stride = stride[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0, o = 0;
  for (std::size_t it = 0; it < total / inner; ++it) {
    std::size_t s = off;
    for (std::size_t j = 0; j < inner; ++j, s += inner_stride, ++o) {
      if constexpr (Scatter) {
        dst[s] += src[o];
      } else {
        dst[o] = src[s];
      }
    }
    for (std::size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out[d]) break;
      off -= stride[d] * out[d];
      idx[d] = 0;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order) {
  const std::size_t r = a.dim();
  std::vector<std::size_t> check = order;
  std::sort(check.begin(), check.end());
  bool valid = check.size() == r;
  for (std::size_t i = 0; valid && i < r; ++i) valid = check[i] == i;
  if (!valid) throw ShapeError("permute: invalid axis order for shape " + shape_str(a.shape()));
  if (r == 0) return reshape(a, a.shape());
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.shape()[order[i]];
  Buffer<T> out(a.numel());
  permute_copy<T, false>(a.shape(), order, a.data().data(), out.data());
  auto ia = a.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {a}, "permute",
                        [ia, order](const TensorImpl<T>& res) {
                          permute_copy<T, true>(ia->shape, order, res.grad.data(), ia->ensure_grad().data());
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, int axis0, int axis1) {
  const std::size_t x = norm_axis(axis0, a.dim(), a.shape());
  const std::size_t y = norm_axis(axis1, a.dim(), a.shape());
  std::vector<std::size_t> order(a.dim());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[x], order[y]);
  return permute(a, order);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::size_t start, std::size_t end) {
  const std::size_t ax = norm_axis(axis, a.dim(), a.shape());
  if (start > end || end > a.shape()[ax]) {
    throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(end) + ") out of range on axis " +
                     std::to_string(ax) + " of " + shape_str(a.shape()));
  }
  const AxisView v = axis_view(a.shape(), ax);
  const std::size_t w = end - start;
  Shape out_shape = a.shape();
  out_shape[ax] = w;
  Buffer<T> out(v.outer * w * v.inner);
  const T* pa = a.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(pa + (o * v.len + start) * v.inner, w * v.inner, out.data() + o * w * v.inner);
  }
  auto ia = a.impl();
  return make_result<T>(std::move(out_shape), std::move(out), {a}, "slice",
                        [ia, v, start, w](const TensorImpl<T>& res) {
                          T* ga = ia->ensure_grad().data();
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            T* dst = ga + (o * v.len + start) * v.inner;
                            const T* src = res.grad.data() + o * w * v.inner;
                            for (std::size_t j = 0; j < w * v.inner; ++j) dst[j] += src[j];
                          }
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  const std::size_t ax = norm_axis(axis, ref.size(), ref);
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    bool ok = p.dim() == ref.size();
    for (std::size_t i = 0; ok && i < ref.size(); ++i) ok = (i == ax) || p.shape()[i] == ref[i];
    if (!ok) throw ShapeError("concat: shape " + shape_str(p.shape()) + " incompatible with " + shape_str(ref));
    total_len += p.shape()[ax];
  }
  Shape out_shape = ref;
  out_shape[ax] = total_len;
  const AxisView v = axis_view(out_shape, ax);
  Buffer<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t w = p.shape()[ax];
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(p.data().data() + o * w * v.inner, w * v.inner, out.data() + (o * total_len + off) * v.inner);
    }
    off += w;
  }
  std::vector<ImplPtr<T>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result<T>(std::move(out_shape), std::move(out), parts, "concat",
                        [impls, offsets, v, total_len](const TensorImpl<T>& res) {
                          for (std::size_t k = 0; k < impls.size(); ++k) {
                            if (!impls[k]->requires_grad) continue;
                            const std::size_t w = impls[k]->data.size() / (v.outer * v.inner);
                            T* g = impls[k]->ensure_grad().data();
                            for (std::size_t o = 0; o < v.outer; ++o) {
                              const T* src = res.grad.data() + (o * total_len + offsets[k]) * v.inner;
                              T* dst = g + o * w * v.inner;
                              for (std::size_t j = 0; j < w * v.inner; ++j) dst[j] += src[j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& a) {
  return Tensor<T>(a.shape(), std::vector<T>(a.data().begin(), a.data().end()));
}

#define PLITA_INSTANTIATE_OPS(T)                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                              \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                              \
  template Tensor<T> neg(const Tensor<T>&);                                        \
  template Tensor<T> exp(const Tensor<T>&);                                        \
  template Tensor<T> log(const Tensor<T>&);                                        \
  template Tensor<T> sqrt(const Tensor<T>&);                                       \
  template Tensor<T> square(const Tensor<T>&);                                     \
  template Tensor<T> tanh(const Tensor<T>&);                                       \
  template Tensor<T> sigmoid(const Tensor<T>&);                                    \
  template Tensor<T> relu(const Tensor<T>&);                                       \
  template Tensor<T> gelu(const Tensor<T>&);                                       \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                               \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                \
  template Tensor<T> sum(const Tensor<T>&, int, bool);                             \
  template Tensor<T> mean(const Tensor<T>&, int, bool);                            \
  template Tensor<T> sum_all(const Tensor<T>&);                                    \
  template Tensor<T> mean_all(const Tensor<T>&);                                   \
  template Tensor<T> max(const Tensor<T>&, int, bool);                             \
  template Tensor<T> min(const Tensor<T>&, int, bool);                             \
  template Tensor<T> l2_norm(const Tensor<T>&, int, bool);                         \
  template Tensor<T> softmax(const Tensor<T>&);                                    \
  template Tensor<T> log_softmax(const Tensor<T>&);                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                             \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);   \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                        \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                   \
  template Tensor<T> stop_gradient(const Tensor<T>&);

PLITA_INSTANTIATE_OPS(float)
PLITA_INSTANTIATE_OPS(double)

#undef PLITA_INSTANTIATE_OPS

}  // namespace plita::core
