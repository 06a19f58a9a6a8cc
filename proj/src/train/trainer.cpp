#include "plita/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace plita::train {

namespace fs = std::filesystem;
using core::Tensor;
using nlohmann::json;

namespace {

constexpr std::uint64_t kAugmentStream = 0x6175676d656e74ULL;

// Drops rows logged after the checkpoint a resumed run restarts from.
void trim_metrics(const fs::path& path, std::size_t keep_below) {
  std::ifstream in(path);
  std::string line, kept;
  std::getline(in, line);
  kept = line + '\n';
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) < keep_below) kept += line + '\n';
  }
  in.close();
  std::ofstream(path, std::ios::trunc) << kept;
}

core::AdamConfig adam_config(const TrainConfig& cfg) {
  core::AdamConfig a;
  a.lr = cfg.lr;
  a.weight_decay = cfg.weight_decay;
  return a;
}

data::BatchConfig batch_config(const TrainConfig& cfg) {
  return {.batch = cfg.batch, .n = cfg.n, .window_s = cfg.window_s, .max_retries = cfg.max_retries};
}

template <typename T>
Tensor<T> rows(const Tensor<T>& x, std::size_t from, std::size_t to, std::size_t batch, std::size_t n) {
  return core::reshape(core::slice(x, 0, from, to), {batch, n, x.size(1)});
}

}  // namespace

TrainConfig train_profile(const std::string& name) {
  TrainConfig cfg;
  cfg.profile = name;
  cfg.model = model::model_profile(name);
  if (name == "paper") {
    cfg.iterations = 35000;
    cfg.batch = 256;
  }
  return cfg;
}

void validate(const TrainConfig& cfg) {
  if (!cfg.enable_iv && !cfg.enable_tv) throw std::invalid_argument("at least one of enable_iv / enable_tv must be true");
  if (cfg.batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (cfg.enable_tv && cfg.n < 2) throw std::invalid_argument("the tempo-variant loss needs N >= 2");
  if (!(cfg.lr > 0)) throw std::invalid_argument("lr must be positive");
  if (!(cfg.weight_decay >= 0)) throw std::invalid_argument("weight_decay must be >= 0");
  data::window_geometry(cfg.window_s, cfg.n);
  model::validate(cfg.model);
  quality_predicate(cfg.quality);
}

signal::QualityPredicate quality_predicate(const std::string& name) {
  if (name == "none") return signal::accept_all();
  if (name == "flatline") return signal::flatline_detector();
  if (name == "clipping") return signal::clipping_detector();
  if (name == "flatline+clipping") return signal::all_of({signal::flatline_detector(), signal::clipping_detector()});
  throw std::invalid_argument("unknown quality predicate '" + name + "' (none|flatline|clipping|flatline+clipping)");
}

losses::Metric parse_metric(const std::string& name) {
  if (name == "cosine") return losses::Metric::Cosine;
  if (name == "euclidean") return losses::Metric::Euclidean;
  throw std::invalid_argument("unknown metric '" + name + "' (cosine|euclidean)");
}

std::string to_string(losses::Metric metric) { return metric == losses::Metric::Cosine ? "cosine" : "euclidean"; }

void to_json(json& j, const TrainConfig& c) {
  j = json{{"profile", c.profile},
           {"model", c.model},
           {"iterations", c.iterations},
           {"batch", c.batch},
           {"N", c.n},
           {"W", c.window_s},
           {"lr", c.lr},
           {"weight_decay", c.weight_decay},
           {"metric", to_string(c.metric)},
           {"enable_iv", c.enable_iv},
           {"enable_tv", c.enable_tv},
           {"augment_reverse", c.augment.reverse},
           {"augment_flip", c.augment.flip},
           {"seed", c.seed},
           {"checkpoint_every", c.checkpoint_every},
           {"max_retries", c.max_retries},
           {"quality", c.quality}};
}

void from_json(const json& j, TrainConfig& c) {
  j.at("profile").get_to(c.profile);
  j.at("model").get_to(c.model);
  j.at("iterations").get_to(c.iterations);
  j.at("batch").get_to(c.batch);
  j.at("N").get_to(c.n);
  j.at("W").get_to(c.window_s);
  j.at("lr").get_to(c.lr);
  j.at("weight_decay").get_to(c.weight_decay);
  c.metric = parse_metric(j.at("metric").get<std::string>());
  j.at("enable_iv").get_to(c.enable_iv);
  j.at("enable_tv").get_to(c.enable_tv);
  j.at("augment_reverse").get_to(c.augment.reverse);
  j.at("augment_flip").get_to(c.augment.flip);
  j.at("seed").get_to(c.seed);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("max_retries").get_to(c.max_retries);
  j.at("quality").get_to(c.quality);
}

template <typename T>
LossTerms<T> compute_losses(const model::ModelPair<T>& pair, const Tensor<T>& x1, const Tensor<T>& x2,
                            std::size_t batch, std::size_t n, losses::Metric metric, bool enable_iv, bool enable_tv) {
  using model::Branch;
  const std::size_t rows1 = batch * n;
  const auto x = core::concat<T>({x1, x2}, 0);
  const auto& s = pair.student();
  const auto h = s.encode(x);
  const auto q_iv = s.predict(s.project(h, Branch::Invariant), Branch::Invariant);
  const auto q_tv = s.predict(s.project(h, Branch::TempoVariant), Branch::TempoVariant);
  Tensor<T> zeta_iv, zeta_tv;
  {
    core::NoGradGuard guard;
    const auto& t = pair.teacher();
    const auto ht = t.encode(x);
    zeta_iv = core::stop_gradient(t.project(ht, Branch::Invariant));
    zeta_tv = core::stop_gradient(t.project(ht, Branch::TempoVariant));
  }
  LossTerms<T> out;
  out.l_iv = losses::loss_iv(rows(zeta_iv, 0, rows1, batch, n), rows(q_iv, rows1, 2 * rows1, batch, n),
                             rows(zeta_iv, rows1, 2 * rows1, batch, n), rows(q_iv, 0, rows1, batch, n), metric);
  if (n >= 2) {
    out.l_tv = losses::loss_tv(rows(zeta_tv, 0, rows1, batch, n), rows(q_tv, 0, rows1, batch, n),
                               rows(zeta_tv, rows1, 2 * rows1, batch, n), rows(q_tv, rows1, 2 * rows1, batch, n), metric);
  } else {
    out.l_tv = Tensor<T>({batch});
  }
  out.total = losses::total_loss(out.l_iv, out.l_tv, enable_iv, enable_tv);
  return out;
}

template LossTerms<float> compute_losses(const model::ModelPair<float>&, const Tensor<float>&, const Tensor<float>&,
                                         std::size_t, std::size_t, losses::Metric, bool, bool);
template LossTerms<double> compute_losses(const model::ModelPair<double>&, const Tensor<double>&, const Tensor<double>&,
                                          std::size_t, std::size_t, losses::Metric, bool, bool);

std::string format_metrics(const StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", m.iter, m.l_iv, m.l_tv, m.total, m.grad_norm,
                m.ema_gap, m.ms);
  return buf;
}

TrainingDiverged::TrainingDiverged(std::size_t iter, const StepMetrics& last, const std::string& detail)
    : std::runtime_error("training diverged at iteration " + std::to_string(iter) + ": " + detail +
                         " (last metrics " + format_metrics(last) + ")"),
      iter_(iter) {}

Trainer::Trainer(const TrainConfig& cfg, const data::Corpus& corpus, Logger log)
    : cfg_(cfg),
      corpus_(&corpus),
      index_(corpus),
      predicate_(quality_predicate(cfg.quality)),
      pair_(cfg.model, cfg.seed),
      adam_(adam_config(cfg)),
      log_(std::move(log)) {
  validate(cfg_);
  if (index_.empty()) throw std::invalid_argument("corpus has no subject with two records");
  for (const auto& r : corpus) {
    if (r.fs != signal::kTargetRate) {
      throw std::invalid_argument("training corpus must be prefiltered to 100 Hz; " + r.subject_id + "/" +
                                  r.record_id + " is at " + std::to_string(r.fs) + " Hz");
    }
  }
}

data::TrainingBatch Trainer::batch_for(std::size_t iteration) const {
  auto batch = data::build_batch(index_, batch_config(cfg_), cfg_.seed, iteration, predicate_);
  if (cfg_.augment.reverse || cfg_.augment.flip) {
    const std::size_t len = signal::kStripSamples;
    std::uint64_t strip_id = 0;
    for (auto& item : batch.items) {
      for (auto* ws : {&item.first, &item.second}) {
        for (std::size_t i = 0; i < ws->count(); ++i, ++strip_id) {
          core::Rng rng = core::keyed_rng({cfg_.seed, iteration, kAugmentStream, strip_id});
          auto* p = ws->strips.data() + i * len;
          const auto out = losses::augment(std::span<const float>(p, len), cfg_.augment, rng);
          std::copy(out.begin(), out.end(), p);
        }
      }
    }
  }
  return batch;
}

StepMetrics Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto batch = batch_for(step_);
  const std::size_t b = batch.size(), n = batch.n, len = signal::kStripSamples;
  Tensor<float> x1({b * n, len}, batch.stacked(0));
  Tensor<float> x2({b * n, len}, batch.stacked(1));

  auto params = pair_.student_parameters();
  for (auto& p : params) p.tensor.zero_grad();
  const auto terms = compute_losses(pair_, x1, x2, b, n, cfg_.metric, cfg_.enable_iv, cfg_.enable_tv);

  StepMetrics m;
  m.iter = step_;
  m.l_iv = core::mean_all(terms.l_iv).item();
  m.l_tv = core::mean_all(terms.l_tv).item();
  m.total = terms.total.item();
  if (!std::isfinite(m.total)) throw TrainingDiverged(step_, m, "non-finite loss");
  terms.total.backward();

  double ss = 0.0;
  for (const auto& p : params) {
    for (float g : p.tensor.grad()) ss += static_cast<double>(g) * g;
  }
  m.grad_norm = std::sqrt(ss);
  try {
    adam_.step(params);
  } catch (const core::NonFiniteGradient& e) {
    throw TrainingDiverged(step_, m, e.what());
  }
  pair_.ema_update();
  m.ema_gap = pair_.ema_gap();
  ++step_;
  m.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

model::Checkpoint Trainer::checkpoint() const {
  model::Checkpoint ckpt;
  ckpt.header["format"] = "plita-train";
  ckpt.header["config"] = cfg_;
  ckpt.header["step"] = step_;
  ckpt.header["tau"] = pair_.tau();
  ckpt.header["adam_step"] = adam_.step_count();
  const auto student = pair_.student_parameters();
  model::store_parameters(ckpt, "student.", student);
  model::store_parameters(ckpt, "teacher.", pair_.teacher_parameters());
  const auto& m = adam_.first_moments();
  const auto& v = adam_.second_moments();
  for (std::size_t i = 0; i < m.size(); ++i) {
    ckpt.add("adam.m." + student[i].name, student[i].tensor.shape(), m[i]);
    ckpt.add("adam.v." + student[i].name, student[i].tensor.shape(), v[i]);
  }
  return ckpt;
}

void Trainer::save(const fs::path& path) const { model::save_checkpoint(path, checkpoint()); }

Trainer Trainer::resume(const fs::path& path, const TrainConfig& cfg, const data::Corpus& corpus, Logger log) {
  const auto ckpt = model::load_checkpoint(path);
  if (ckpt.header.value("format", "") != "plita-train") throw ResumeError(path.string() + " is not a training checkpoint");
  const TrainConfig saved = ckpt.header.at("config").get<TrainConfig>();
  if (!model::same_structure(saved.model, cfg.model)) {
    throw ResumeError("cannot resume: model structure differs from checkpoint (saved " +
                      json(saved.model).dump() + ", requested " + json(cfg.model).dump() + ")");
  }
  if (log) {
    const json a = saved, b = cfg;
    for (const auto& [key, value] : b.items()) {
      if (key != "model" && key != "iterations" && a.contains(key) && a[key] != value) {
        log("resume: " + key + " changed from " + a[key].dump() + " to " + value.dump());
      }
    }
    if (a["model"]["tau"] != b["model"]["tau"]) log("resume: tau changed");
  }
  Trainer t(cfg, corpus, std::move(log));
  auto student = t.pair_.student_parameters();
  model::restore_parameters(ckpt, "student.", student);
  auto teacher = t.pair_.teacher_parameters();
  model::restore_parameters(ckpt, "teacher.", teacher);
  const auto adam_step = ckpt.header.at("adam_step").get<std::int64_t>();
  if (adam_step > 0) {
    std::vector<std::vector<float>> m, v;
    for (const auto& p : student) {
      m.push_back(ckpt.get("adam.m." + p.name).data);
      v.push_back(ckpt.get("adam.v." + p.name).data);
    }
    t.adam_.load_state(student, adam_step, std::move(m), std::move(v));
  }
  t.step_ = ckpt.header.at("step").get<std::size_t>();
  return t;
}

void Trainer::run(const fs::path& out, const std::function<void(const StepMetrics&)>& on_step) {
  fs::create_directories(out);
  const fs::path metrics_path = out / "metrics.csv";
  const bool fresh = step_ == 0 || !fs::exists(metrics_path);
  if (!fresh) trim_metrics(metrics_path, step_);
  std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  if (fresh) metrics << kMetricsHeader << '\n';
  while (step_ < cfg_.iterations) {
    const auto m = step();
    metrics << format_metrics(m) << '\n';
    metrics.flush();
    if (on_step) on_step(m);
    if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && step_ < cfg_.iterations) {
      save(out / "checkpoint.bin");
    }
  }
  save(out / "checkpoint.bin");
}

model::ModelPair<float> load_model(const fs::path& path, TrainConfig* cfg_out) {
  const auto ckpt = model::load_checkpoint(path);
  const TrainConfig cfg = ckpt.header.at("config").get<TrainConfig>();
  model::ModelPair<float> pair(cfg.model, cfg.seed);
  auto student = pair.student_parameters();
  model::restore_parameters(ckpt, "student.", student);
  auto teacher = pair.teacher_parameters();
  model::restore_parameters(ckpt, "teacher.", teacher);
  if (cfg_out) *cfg_out = cfg;
  return pair;
}

}  // namespace plita::train
