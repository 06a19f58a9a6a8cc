#pragma once

#include <string>

#include "plita/core/ops.hpp"
#include "plita/core/rng.hpp"
#include "plita/model/config.hpp"

namespace plita::model {

using core::ParameterList;
using core::Rng;
using core::Tensor;

/// y = x W + b with W stored [in, out]. Weights ~ truncated normal(0.02), bias 0.
template <typename T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return core::linear(x, weight, bias); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor<T> operator()(const Tensor<T>& x) const { return core::layer_norm(x, gamma, beta); }
  void collect(ParameterList<T>& out, const std::string& prefix) const;
};

/// Linear -> LayerNorm -> ReLU -> Linear. Used for projectors and predictors.
template <typename T>
struct Mlp {
  Linear<T> fc1;
  LayerNorm<T> norm;
  Linear<T> fc2;

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;
};

/// Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x)) with GELU.
template <typename T>
struct Block {
  std::size_t heads = 1;
  LayerNorm<T> ln1, ln2;
  Linear<T> qkv, proj, fc1, fc2;

  Block() = default;
  Block(std::size_t dim, std::size_t heads, std::size_t mlp_ratio, Rng& rng);
  /// x: [S, P, D]
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;
};

/// 1-D patch transformer: [S, 1000] -> 50 patches of 20 -> blocks -> mean over tokens -> [S, dim].
template <typename T>
struct Encoder {
  EncoderConfig cfg;
  Linear<T> patch;
  Tensor<T> position;  // [tokens, dim], learned
  std::vector<Block<T>> blocks;
  LayerNorm<T> norm;

  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Rng& rng);
  /// Throws core::ShapeError unless strips is [S, input_len].
  Tensor<T> operator()(const Tensor<T>& strips) const;
  void collect(ParameterList<T>& out, const std::string& prefix) const;
};

/// Single-layer GRU over T representations, final hidden state -> linear classifier.
template <typename T>
struct GruHead {
  std::size_t hidden = 64;
  Linear<T> input;      // [in, 3H]  (reset, update, candidate)
  Linear<T> recurrent;  // [H, 3H]
  Linear<T> classifier;

  GruHead() = default;
  GruHead(std::size_t input_dim, std::size_t classes, Rng& rng, std::size_t hidden = 64);
  /// seq: [batch, T, in] -> logits [batch, classes]; [T, in] -> [classes].
  Tensor<T> operator()(const Tensor<T>& seq) const;
  ParameterList<T> parameters() const;
};

/// Deep copy of every tensor in `params` (fresh storage, same names).
template <typename T>
ParameterList<T> clone_parameters(const ParameterList<T>& params);

}  // namespace plita::model
