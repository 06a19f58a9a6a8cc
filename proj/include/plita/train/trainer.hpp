#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <stdexcept>
#include <string>

#include "plita/core/adam.hpp"
#include "plita/data/sampler.hpp"
#include "plita/losses/losses.hpp"
#include "plita/model/checkpoint.hpp"
#include "plita/model/model_pair.hpp"

namespace plita::train {

struct TrainConfig {
  std::string profile = "desk";
  model::ModelConfig model = model::model_profile("desk");
  std::size_t iterations = 2000;
  std::size_t batch = 32;
  std::size_t n = 4;
  double window_s = 120.0;
  double lr = 3e-4;
  double weight_decay = 1.5e-6;
  losses::Metric metric = losses::Metric::Cosine;
  bool enable_iv = true;
  bool enable_tv = true;
  losses::AugmentConfig augment;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;
  std::size_t max_retries = 8;
  /// none | flatline | clipping | flatline+clipping
  std::string quality = "none";
};

/// "desk": K=2000, B=32, depth 2, dim 64. "paper": K=35000, B=256, depth 6, dim 128.
TrainConfig train_profile(const std::string& name);

/// Throws std::invalid_argument for infeasible (W, N), both losses disabled, or a bad model config.
void validate(const TrainConfig& cfg);

signal::QualityPredicate quality_predicate(const std::string& name);
losses::Metric parse_metric(const std::string& name);
std::string to_string(losses::Metric metric);

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

template <typename T>
struct LossTerms {
  core::Tensor<T> l_iv, l_tv;  // per item, [B]
  core::Tensor<T> total;       // scalar
};

/// One forward pass of the method: student on X1 and X2 (stacked), teacher under
/// no-grad with stop-gradient outputs, cross-record L_iv and within-record L_tv.
/// x1, x2: [B*N, 1000] strips in item-major, time-sorted order.
template <typename T>
LossTerms<T> compute_losses(const model::ModelPair<T>& pair, const core::Tensor<T>& x1, const core::Tensor<T>& x2,
                            std::size_t batch, std::size_t n, losses::Metric metric, bool enable_iv, bool enable_tv);

struct StepMetrics {
  std::size_t iter = 0;
  double l_iv = 0, l_tv = 0, total = 0, grad_norm = 0, ema_gap = 0, ms = 0;
};

/// CSV header used by the metrics log.
inline constexpr const char* kMetricsHeader = "iter,l_iv,l_tv,total,grad_norm,ema_gap,ms";
std::string format_metrics(const StepMetrics& m);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t iter, const StepMetrics& last, const std::string& detail);
  std::size_t iteration() const { return iter_; }

 private:
  std::size_t iter_;
};

class ResumeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Owns theta, xi and the optimizer. Single-threaded; batches depend only on (seed, iteration).
class Trainer {
 public:
  using Logger = std::function<void(const std::string&)>;

  /// `corpus` must be prefiltered to 100 Hz and outlive the trainer.
  Trainer(const TrainConfig& cfg, const data::Corpus& corpus, Logger log = {});

  /// Continue from a checkpoint. Structural model changes throw ResumeError;
  /// other differences (e.g. lr) are applied and reported through `log`.
  static Trainer resume(const std::filesystem::path& checkpoint, const TrainConfig& cfg, const data::Corpus& corpus,
                        Logger log = {});

  StepMetrics step();
  /// Runs until `iterations` steps are done, appending to `out/metrics.csv` and
  /// writing `out/checkpoint.bin` every checkpoint_every steps and at the end.
  void run(const std::filesystem::path& out, const std::function<void(const StepMetrics&)>& on_step = {});

  model::Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;

  std::size_t iteration() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  model::ModelPair<float>& pair() { return pair_; }
  const model::ModelPair<float>& pair() const { return pair_; }
  const core::Adam<float>& optimizer() const { return adam_; }
  /// The batch the given iteration trains on.
  data::TrainingBatch batch_for(std::size_t iteration) const;

 private:
  TrainConfig cfg_;
  const data::Corpus* corpus_;
  data::SubjectPairIndex index_;
  signal::QualityPredicate predicate_;
  model::ModelPair<float> pair_;
  core::Adam<float> adam_;
  std::size_t step_ = 0;
  Logger log_;
};

/// Build the model tensors a checkpoint describes (student + teacher restored).
model::ModelPair<float> load_model(const std::filesystem::path& checkpoint, TrainConfig* cfg_out = nullptr);

}  // namespace plita::train
