#include "plita/model/layers.hpp"

#include <cmath>

namespace plita::model {

using namespace core;

namespace {

template <typename T>
Tensor<T> init_weight(Shape shape, Rng& rng) {
  Tensor<T> t(std::move(shape), T(0), true);
  for (auto& v : t.mutable_data()) v = static_cast<T>(truncated_normal(rng, 0.02));
  return t;
}

template <typename T>
void push(ParameterList<T>& out, const std::string& name, const Tensor<T>& t) {
  out.push_back({name, t});
}

}  // namespace

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(init_weight<T>({in, out}, rng)), bias(Tensor<T>({out}, T(0), true)) {}

template <typename T>
void Linear<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  push(out, prefix + ".weight", weight);
  push(out, prefix + ".bias", bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim) : gamma(Tensor<T>({dim}, T(1), true)), beta(Tensor<T>({dim}, T(0), true)) {}

template <typename T>
void LayerNorm<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  push(out, prefix + ".gamma", gamma);
  push(out, prefix + ".beta", beta);
}

template <typename T>
Mlp<T>::Mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng)
    : fc1(in, hidden, rng), norm(hidden), fc2(hidden, out, rng) {}

template <typename T>
Tensor<T> Mlp<T>::operator()(const Tensor<T>& x) const {
  return fc2(relu(norm(fc1(x))));
}

template <typename T>
void Mlp<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  fc1.collect(out, prefix + ".fc1");
  norm.collect(out, prefix + ".norm");
  fc2.collect(out, prefix + ".fc2");
}

template <typename T>
Block<T>::Block(std::size_t dim, std::size_t heads_, std::size_t mlp_ratio, Rng& rng)
    : heads(heads_),
      ln1(dim),
      ln2(dim),
      qkv(dim, 3 * dim, rng),
      proj(dim, dim, rng),
      fc1(dim, mlp_ratio * dim, rng),
      fc2(mlp_ratio * dim, dim, rng) {}

template <typename T>
Tensor<T> Block<T>::operator()(const Tensor<T>& x) const {
  const std::size_t s = x.size(0), p = x.size(1), d = x.size(2);
  const std::size_t dh = d / heads;
  auto qkv_t = permute(reshape(qkv(ln1(x)), {s, p, 3, heads, dh}), {2, 0, 3, 1, 4});  // [3,S,H,P,dh]
  auto part = [&](std::size_t i) { return reshape(slice(qkv_t, 0, i, i + 1), {s * heads, p, dh}); };
  auto q = part(0), k = part(1), v = part(2);
  auto attn = softmax(mul_scalar(bmm(q, k, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)))));
  auto o = reshape(permute(reshape(bmm(attn, v), {s, heads, p, dh}), {0, 2, 1, 3}), {s, p, d});
  auto h = add(x, proj(o));
  return add(h, fc2(gelu(fc1(ln2(h)))));
}

template <typename T>
void Block<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  ln1.collect(out, prefix + ".ln1");
  qkv.collect(out, prefix + ".qkv");
  proj.collect(out, prefix + ".proj");
  ln2.collect(out, prefix + ".ln2");
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& c, Rng& rng)
    : cfg(c), patch(c.patch_size, c.dim, rng), position(init_weight<T>({c.tokens(), c.dim}, rng)), norm(c.dim) {
  for (std::size_t i = 0; i < c.depth; ++i) blocks.emplace_back(c.dim, c.heads, c.mlp_ratio, rng);
}

template <typename T>
Tensor<T> Encoder<T>::operator()(const Tensor<T>& strips) const {
  if (strips.dim() != 2 || strips.size(1) != cfg.input_len) {
    throw ShapeError("encoder expects [batch," + std::to_string(cfg.input_len) + "] strips, got " +
                     shape_str(strips.shape()));
  }
  const std::size_t s = strips.size(0);
  auto x = add(patch(reshape(strips, {s, cfg.tokens(), cfg.patch_size})), position);
  for (const auto& b : blocks) x = b(x);
  return mean(norm(x), 1);
}

template <typename T>
void Encoder<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  patch.collect(out, prefix + ".patch");
  push(out, prefix + ".position", position);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".blocks." + std::to_string(i));
  norm.collect(out, prefix + ".norm");
}

template <typename T>
GruHead<T>::GruHead(std::size_t input_dim, std::size_t classes, Rng& rng, std::size_t hidden_)
    : hidden(hidden_), input(input_dim, 3 * hidden_, rng), recurrent(hidden_, 3 * hidden_, rng),
      classifier(hidden_, classes, rng) {}

template <typename T>
Tensor<T> GruHead<T>::operator()(const Tensor<T>& seq_in) const {
  const bool single = seq_in.dim() == 2;
  const Tensor<T> seq = single ? reshape(seq_in, {1, seq_in.size(0), seq_in.size(1)}) : seq_in;
  if (seq.dim() != 3 || seq.size(1) < 1) throw ShapeError("gru_head expects [batch,T,in], got " + shape_str(seq_in.shape()));
  const std::size_t b = seq.size(0), steps = seq.size(1), H = hidden;
  auto xs = input(seq);  // [B, T, 3H]
  Tensor<T> h = Tensor<T>::zeros({b, H});
  for (std::size_t t = 0; t < steps; ++t) {
    auto xt = reshape(slice(xs, 1, t, t + 1), {b, 3 * H});
    auto hh = recurrent(h);
    auto r = sigmoid(add(slice(xt, 1, 0, H), slice(hh, 1, 0, H)));
    auto z = sigmoid(add(slice(xt, 1, H, 2 * H), slice(hh, 1, H, 2 * H)));
    auto n = tanh(add(slice(xt, 1, 2 * H, 3 * H), mul(r, slice(hh, 1, 2 * H, 3 * H))));
    h = add(n, mul(z, sub(h, n)));
  }
  auto logits = classifier(h);
  return single ? reshape(logits, {logits.size(1)}) : logits;
}

template <typename T>
ParameterList<T> GruHead<T>::parameters() const {
  ParameterList<T> out;
  input.collect(out, "gru.input");
  recurrent.collect(out, "gru.recurrent");
  classifier.collect(out, "gru.classifier");
  return out;
}

template <typename T>
ParameterList<T> clone_parameters(const ParameterList<T>& params) {
  ParameterList<T> out;
  for (const auto& p : params) {
    Tensor<T> copy = p.tensor.clone();
    copy.set_requires_grad(p.tensor.requires_grad());
    out.push_back({p.name, copy});
  }
  return out;
}

#define PLITA_INSTANTIATE_LAYERS(T)                                               \
  template struct Linear<T>;                                                      \
  template struct LayerNorm<T>;                                                   \
  template struct Mlp<T>;                                                         \
  template struct Block<T>;                                                       \
  template struct Encoder<T>;                                                     \
  template struct GruHead<T>;                                                     \
  template ParameterList<T> clone_parameters(const ParameterList<T>&);

PLITA_INSTANTIATE_LAYERS(float)
PLITA_INSTANTIATE_LAYERS(double)

}  // namespace plita::model
