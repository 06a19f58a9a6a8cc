#pragma once

#include <optional>

#include "plita/model/layers.hpp"

namespace plita::model {

enum class Branch { Invariant, TempoVariant };

/// Encoder F plus projectors G_iv, G_tv and, for the student only, predictors Q_iv, Q_tv.
template <typename T>
struct Network {
  ModelConfig cfg;
  Encoder<T> encoder;
  Mlp<T> proj_iv, proj_tv;
  std::optional<Mlp<T>> pred_iv, pred_tv;

  Tensor<T> encode(const Tensor<T>& strips) const { return encoder(strips); }
  /// h: [batch, dim] -> [batch, projector_out]. With split on, G_iv sees
  /// h[:, :dim/2] and G_tv sees h[:, dim/2:].
  Tensor<T> project(const Tensor<T>& h, Branch branch) const;
  /// Throws std::logic_error on a network without predictors.
  Tensor<T> predict(const Tensor<T>& z, Branch branch) const;
  bool has_predictors() const { return pred_iv.has_value(); }

  /// Encoder and projector parameters, in a fixed order shared by student and teacher.
  ParameterList<T> backbone_parameters() const;
  /// Everything, predictors last.
  ParameterList<T> parameters() const;
};

/// Student theta and teacher xi. The teacher starts as a copy of the student's
/// backbone and only moves through ema_update.
template <typename T>
class ModelPair {
 public:
  ModelPair(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  double tau() const { return cfg_.tau; }
  Network<T>& student() { return student_; }
  const Network<T>& student() const { return student_; }
  const Network<T>& teacher() const { return teacher_; }
  Network<T>& teacher() { return teacher_; }

  ParameterList<T> student_parameters() const { return student_.parameters(); }
  ParameterList<T> teacher_parameters() const { return teacher_.backbone_parameters(); }

  /// xi <- tau * xi + (1 - tau) * theta over the shared backbone.
  void ema_update();
  /// ||theta_backbone - xi||_2 accumulated in double.
  double ema_gap() const;

 private:
  ModelConfig cfg_;
  Network<T> student_, teacher_;
};

/// xi <- tau * xi + (1 - tau) * theta elementwise. Throws std::invalid_argument
/// on name or shape mismatch.
template <typename T>
void ema_update(ParameterList<T>& teacher, const ParameterList<T>& student, double tau);

}  // namespace plita::model
