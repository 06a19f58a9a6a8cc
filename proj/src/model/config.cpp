#include "plita/model/config.hpp"

#include <stdexcept>

namespace plita::model {

void validate(const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (e.patch_size == 0 || e.input_len % e.patch_size != 0) {
    fail("input_len " + std::to_string(e.input_len) + " not divisible by patch_size " + std::to_string(e.patch_size));
  }
  if (e.heads == 0 || e.dim % e.heads != 0) {
    fail("dim " + std::to_string(e.dim) + " not divisible by heads " + std::to_string(e.heads));
  }
  if (e.depth == 0 || e.mlp_ratio == 0) fail("depth and mlp_ratio must be >= 1");
  if (cfg.head.split && e.dim % 2 != 0) fail("split mode needs an even dim");
  if (cfg.head.projector_out == 0 || cfg.head.projector_hidden == 0 || cfg.head.predictor_hidden == 0) {
    fail("head widths must be >= 1");
  }
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) fail("tau must lie in [0, 1]");
}

ModelConfig model_profile(const std::string& name) {
  ModelConfig cfg;
  if (name == "paper") return cfg;
  if (name == "desk") {
    cfg.encoder.depth = 2;
    cfg.encoder.dim = 64;
    return cfg;
  }
  throw std::invalid_argument("unknown profile '" + name + "' (expected desk or paper)");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  j = nlohmann::json{{"input_len", e.input_len},
                     {"patch_size", e.patch_size},
                     {"depth", e.depth},
                     {"heads", e.heads},
                     {"dim", e.dim},
                     {"mlp_ratio", e.mlp_ratio},
                     {"projector_hidden", cfg.head.projector_hidden},
                     {"projector_out", cfg.head.projector_out},
                     {"predictor_hidden", cfg.head.predictor_hidden},
                     {"split", cfg.head.split},
                     {"tau", cfg.tau}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  auto& e = cfg.encoder;
  j.at("input_len").get_to(e.input_len);
  j.at("patch_size").get_to(e.patch_size);
  j.at("depth").get_to(e.depth);
  j.at("heads").get_to(e.heads);
  j.at("dim").get_to(e.dim);
  j.at("mlp_ratio").get_to(e.mlp_ratio);
  j.at("projector_hidden").get_to(cfg.head.projector_hidden);
  j.at("projector_out").get_to(cfg.head.projector_out);
  j.at("predictor_hidden").get_to(cfg.head.predictor_hidden);
  j.at("split").get_to(cfg.head.split);
  j.at("tau").get_to(cfg.tau);
}

bool same_structure(const ModelConfig& a, const ModelConfig& b) {
  const auto& x = a.encoder;
  const auto& y = b.encoder;
  return x.input_len == y.input_len && x.patch_size == y.patch_size && x.depth == y.depth && x.heads == y.heads &&
         x.dim == y.dim && x.mlp_ratio == y.mlp_ratio && a.head.projector_hidden == b.head.projector_hidden &&
         a.head.projector_out == b.head.projector_out && a.head.predictor_hidden == b.head.predictor_hidden &&
         a.head.split == b.head.split;
}

}  // namespace plita::model
