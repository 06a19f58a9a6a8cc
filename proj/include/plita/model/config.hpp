#pragma once

#include <cstddef>
#include <json.hpp>
#include <string>

namespace plita::model {

struct EncoderConfig {
  std::size_t input_len = 1000;
  std::size_t patch_size = 20;
  std::size_t depth = 6;
  std::size_t heads = 4;
  std::size_t dim = 128;
  std::size_t mlp_ratio = 4;

  std::size_t tokens() const { return input_len / patch_size; }
};

struct HeadConfig {
  std::size_t projector_hidden = 512;
  std::size_t projector_out = 512;
  std::size_t predictor_hidden = 256;
  /// Each projector consumes half of h (G_iv the first half, G_tv the second).
  bool split = false;
};

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;
  double tau = 0.995;
};

/// Throws std::invalid_argument naming the broken invariant.
void validate(const ModelConfig& cfg);

/// "paper": depth 6, dim 128. "desk": depth 2, dim 64. Heads identical.
ModelConfig model_profile(const std::string& name);

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

/// True when two configs produce parameter sets of identical names and shapes.
bool same_structure(const ModelConfig& a, const ModelConfig& b);

}  // namespace plita::model
