#pragma once

// Central finite-difference oracle for reverse-mode gradients (64-bit only).

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "plita/core/rng.hpp"
#include "plita/core/tensor.hpp"

namespace plita::testing {

using core::Tensor;

struct GradCheckOptions {
  double step = 1e-4;
  double rtol = 1e-3;
  double atol = 1e-5;
};

/// Compares backward() gradients of `loss` w.r.t. every element of `leaves`
/// against (f(x+h) - f(x-h)) / 2h.
inline ::testing::AssertionResult check_gradients(std::vector<Tensor<double>> leaves,
                                                  const std::function<Tensor<double>()>& loss,
                                                  GradCheckOptions opt = {}) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());

  core::NoGradGuard no_grad;
  double worst = 0.0;
  std::ostringstream failures;
  int n_fail = 0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + opt.step;
      const double fp = loss().item();
      values[i] = saved - opt.step;
      const double fm = loss().item();
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      const double err = std::abs(numeric - analytic[l][i]);
      const double tol = opt.atol + opt.rtol * std::abs(numeric);
      worst = std::max(worst, err / tol);
      if (err > tol && n_fail++ < 8) {
        failures << "  leaf " << l << " ('" << leaves[l].name() << "') elem " << i << ": analytic "
                 << analytic[l][i] << " numeric " << numeric << "\n";
      }
    }
  }
  if (n_fail) {
    return ::testing::AssertionFailure() << n_fail << " gradient mismatches (worst err/tol " << worst << ")\n"
                                         << failures.str();
  }
  return ::testing::AssertionSuccess();
}

inline Tensor<double> random_tensor(core::Shape shape, core::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& x : t.mutable_data()) x = core::uniform(rng, lo, hi);
  return t;
}

inline Tensor<float> random_tensor_f(core::Shape shape, core::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<float> t(std::move(shape));
  for (auto& x : t.mutable_data()) x = static_cast<float>(core::uniform(rng, lo, hi));
  return t;
}

}  // namespace plita::testing
