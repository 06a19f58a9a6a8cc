#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "plita/core/adam.hpp"
#include "plita/core/ops.hpp"
#include "plita/core/rng.hpp"

namespace plita::core {
namespace {

TEST(AdamTest, FirstStepMovesByLearningRate) {
  // m_hat = g, v_hat = g^2 on step 1, so the update is lr * g/|g| = 0.1.
  ParameterList<double> params{{"w", Tensor<double>({1}, 0.0, true)}};
  params[0].tensor.mutable_grad()[0] = 1.0;
  Adam<double> opt({.lr = 0.1, .weight_decay = 0.0, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8});
  opt.step(params);
  EXPECT_NEAR(params[0].tensor.data()[0], -0.1, 1e-7);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(AdamTest, ZeroGradientZeroDecayLeavesParameters) {
  ParameterList<float> params{{"w", Tensor<float>({3}, std::vector<float>{1, -2, 3}, true)}};
  Adam<float> opt({.lr = 0.1, .weight_decay = 0.0});
  for (int i = 0; i < 5; ++i) opt.step(params);
  EXPECT_EQ(params[0].tensor.data()[0], 1.0f);
  EXPECT_EQ(params[0].tensor.data()[1], -2.0f);
  EXPECT_EQ(params[0].tensor.data()[2], 3.0f);
}

TEST(AdamTest, DecoupledWeightDecayShrinksWithoutGradient) {
  ParameterList<double> params{{"w", Tensor<double>({1}, 2.0, true)}};
  Adam<double> opt({.lr = 0.1, .weight_decay = 0.5});
  opt.step(params);
  EXPECT_NEAR(params[0].tensor.data()[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-12);
}

TEST(AdamTest, NonFiniteGradientAbortsAndNamesParameter) {
  ParameterList<float> params{{"good", Tensor<float>({1}, 1.0f, true)}, {"enc.bad", Tensor<float>({2}, 1.0f, true)}};
  params[0].tensor.mutable_grad()[0] = 1.0f;
  params[1].tensor.mutable_grad()[1] = std::numeric_limits<float>::quiet_NaN();
  Adam<float> opt;
  try {
    opt.step(params);
    FAIL() << "expected NonFiniteGradient";
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter(), "enc.bad");
  }
  EXPECT_EQ(params[0].tensor.data()[0], 1.0f);
  EXPECT_EQ(opt.step_count(), 0);
}

TEST(AdamTest, SeededRunsAreBitIdentical) {
  auto run = [] {
    Rng rng = keyed_rng({7});
    Tensor<float> w({4, 3}, 0.0f, true);
    for (auto& x : w.mutable_data()) x = static_cast<float>(normal(rng));
    Tensor<float> x({5, 4});
    for (auto& v : x.mutable_data()) v = static_cast<float>(normal(rng));
    ParameterList<float> params{{"w", w}};
    Adam<float> opt;
    for (int step = 0; step < 10; ++step) {
      w.zero_grad();
      mean_all(square(tanh(matmul(x, w)))).backward();
      opt.step(params);
    }
    return std::vector<float>(w.data().begin(), w.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(AdamTest, LoadStateValidatesShapes) {
  ParameterList<float> params{{"w", Tensor<float>({2}, 0.0f, true)}};
  Adam<float> opt;
  EXPECT_THROW(opt.load_state(params, 3, {{0.f}}, {{0.f}}), ShapeError);
  opt.load_state(params, 3, {{0.f, 0.f}}, {{0.f, 0.f}});
  EXPECT_EQ(opt.step_count(), 3);
}

}  // namespace
}  // namespace plita::core
