#include "plita/model/model_pair.hpp"

#include <cmath>
#include <stdexcept>

namespace plita::model {

using namespace core;

namespace {

constexpr std::uint64_t kModelStream = 0x6d6f64656c000001ULL;

template <typename T>
Network<T> build_network(const ModelConfig& cfg, Rng& rng, bool predictors) {
  Network<T> net;
  net.cfg = cfg;
  net.encoder = Encoder<T>(cfg.encoder, rng);
  const std::size_t in = cfg.head.split ? cfg.encoder.dim / 2 : cfg.encoder.dim;
  const auto& h = cfg.head;
  net.proj_iv = Mlp<T>(in, h.projector_hidden, h.projector_out, rng);
  net.proj_tv = Mlp<T>(in, h.projector_hidden, h.projector_out, rng);
  if (predictors) {
    net.pred_iv = Mlp<T>(h.projector_out, h.predictor_hidden, h.projector_out, rng);
    net.pred_tv = Mlp<T>(h.projector_out, h.predictor_hidden, h.projector_out, rng);
  }
  return net;
}

}  // namespace

template <typename T>
Tensor<T> Network<T>::project(const Tensor<T>& h, Branch branch) const {
  const std::size_t dim = cfg.encoder.dim;
  if (h.dim() != 2 || h.size(1) != dim) {
    throw ShapeError("project expects h of shape [batch," + std::to_string(dim) + "], got " + shape_str(h.shape()));
  }
  const bool iv = branch == Branch::Invariant;
  if (!cfg.head.split) return iv ? proj_iv(h) : proj_tv(h);
  return iv ? proj_iv(slice(h, 1, 0, dim / 2)) : proj_tv(slice(h, 1, dim / 2, dim));
}

template <typename T>
Tensor<T> Network<T>::predict(const Tensor<T>& z, Branch branch) const {
  if (!has_predictors()) throw std::logic_error("predict: teacher network has no predictors");
  return branch == Branch::Invariant ? (*pred_iv)(z) : (*pred_tv)(z);
}

template <typename T>
ParameterList<T> Network<T>::backbone_parameters() const {
  ParameterList<T> out;
  encoder.collect(out, "encoder");
  proj_iv.collect(out, "proj_iv");
  proj_tv.collect(out, "proj_tv");
  return out;
}

template <typename T>
ParameterList<T> Network<T>::parameters() const {
  ParameterList<T> out = backbone_parameters();
  if (pred_iv) pred_iv->collect(out, "pred_iv");
  if (pred_tv) pred_tv->collect(out, "pred_tv");
  return out;
}

template <typename T>
ModelPair<T>::ModelPair(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg);
  Rng rng = keyed_rng({seed, kModelStream});
  student_ = build_network<T>(cfg, rng, true);
  Rng scratch = keyed_rng({seed, kModelStream, 1});
  teacher_ = build_network<T>(cfg, scratch, false);
  auto xi = teacher_.backbone_parameters();
  const auto theta = student_.backbone_parameters();
  for (std::size_t i = 0; i < xi.size(); ++i) {
    auto dst = xi[i].tensor.mutable_data();
    const auto src = theta[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

template <typename T>
void ema_update(ParameterList<T>& teacher, const ParameterList<T>& student, double tau) {
  if (teacher.size() != student.size()) {
    throw std::invalid_argument("ema_update: teacher has " + std::to_string(teacher.size()) + " tensors, student " +
                                std::to_string(student.size()));
  }
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].name != student[i].name || teacher[i].tensor.shape() != student[i].tensor.shape()) {
      throw std::invalid_argument("ema_update: structure mismatch at " + teacher[i].name + " vs " + student[i].name);
    }
    auto xi = teacher[i].tensor.mutable_data();
    const auto theta = student[i].tensor.data();
    for (std::size_t k = 0; k < xi.size(); ++k) {
      xi[k] = static_cast<T>(tau * static_cast<double>(xi[k]) + (1.0 - tau) * static_cast<double>(theta[k]));
    }
  }
}

template <typename T>
void ModelPair<T>::ema_update() {
  auto xi = teacher_.backbone_parameters();
  model::ema_update(xi, student_.backbone_parameters(), cfg_.tau);
}

template <typename T>
double ModelPair<T>::ema_gap() const {
  const auto xi = teacher_.backbone_parameters();
  const auto theta = student_.backbone_parameters();
  double ss = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const auto a = xi[i].tensor.data();
    const auto b = theta[i].tensor.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = static_cast<double>(b[k]) - static_cast<double>(a[k]);
      ss += d * d;
    }
  }
  return std::sqrt(ss);
}

template struct Network<float>;
template struct Network<double>;
template class ModelPair<float>;
template class ModelPair<double>;
template void ema_update(ParameterList<float>&, const ParameterList<float>&, double);
template void ema_update(ParameterList<double>&, const ParameterList<double>&, double);

}  // namespace plita::model
