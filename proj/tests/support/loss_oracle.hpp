#pragma once

// Scalar double-loop reference implementations of the distance matrices and losses.

#include <algorithm>
#include <cmath>
#include <vector>

namespace plita::testing::oracle {

using Rows = std::vector<std::vector<double>>;
using Matrix = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline Matrix cosine(const Rows& a, const Rows& b, double eps = 1e-8) {
  Matrix m(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double denom = std::max(std::sqrt(dot(a[i], a[i])) * std::sqrt(dot(b[j], b[j])), eps);
      m[i][j] = 1.0 - dot(a[i], b[j]) / denom;
    }
  }
  return m;
}

inline Matrix euclidean(const Rows& a, const Rows& b) {
  Matrix m(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a[i].size(); ++k) s += (a[i][k] - b[j][k]) * (a[i][k] - b[j][k]);
      m[i][j] = std::sqrt(s);
    }
  }
  return m;
}

inline double mean_all(const Matrix& m) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& row : m) {
    for (double v : row) {
      s += v;
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

inline double loss_iv(const Rows& zeta1, const Rows& q2, const Rows& zeta2, const Rows& q1, bool cos = true) {
  const auto m12 = cos ? cosine(zeta1, q2) : euclidean(zeta1, q2);
  const auto m21 = cos ? cosine(zeta2, q1) : euclidean(zeta2, q1);
  return 0.5 * (mean_all(m12) + mean_all(m21));
}

inline Matrix ideal(std::size_t n) {
  Matrix m(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m[i][j] = std::abs(double(i) - double(j)) / double(n - 1);
  }
  return m;
}

inline Matrix rescale(const Matrix& m) {
  const std::size_t n = m.size();
  double lo = m[0][0], hi = m[0][0];
  for (const auto& row : m) {
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double a = 1.0 / double(n - 1), b = 1.0;
  Matrix out(n, std::vector<double>(n, a));
  if (hi == lo) return out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i][j] = std::clamp(a + (m[i][j] - lo) * (b - a) / (hi - lo), a, b);
  }
  return out;
}

inline double loss_tv_record(const Rows& zeta, const Rows& q, bool cos = true) {
  const std::size_t n = zeta.size();
  const auto target = ideal(n);
  const auto scaled = rescale(cos ? cosine(zeta, q) : euclidean(zeta, q));
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) s += (target[i][j] - scaled[i][j]) * (target[i][j] - scaled[i][j]);
    }
  }
  return s / double(n * (n - 1));
}

inline double loss_tv(const Rows& zeta1, const Rows& q1, const Rows& zeta2, const Rows& q2, bool cos = true) {
  return 0.5 * (loss_tv_record(zeta1, q1, cos) + loss_tv_record(zeta2, q2, cos));
}

}  // namespace plita::testing::oracle
