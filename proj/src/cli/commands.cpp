#include "plita/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "plita/cli/manifest.hpp"
#include "plita/cli/plot.hpp"
#include "plita/data/corpus_io.hpp"
#include "plita/eval/disentangle.hpp"
#include "plita/eval/sequence.hpp"

namespace plita::cli {

using nlohmann::json;

namespace {

using Log = std::function<void(const std::string&)>;

Log stream_log(std::ostream& os) {
  auto mutex = std::make_shared<std::mutex>();
  return [&os, mutex](const std::string& line) {
    std::lock_guard lock(*mutex);
    os << line << '\n' << std::flush;
  };
}

fs::path next_manifest_path(const fs::path& dir) {
  if (!fs::exists(dir / "run.json")) return dir / "run.json";
  for (std::size_t k = 2;; ++k) {
    const auto p = dir / ("run." + std::to_string(k) + ".json");
    if (!fs::exists(p)) return p;
  }
}

// Creates `dir`; a non-empty one is emptied under `force` and rejected otherwise.
void prepare_output(const fs::path& dir, bool force) {
  if (dir.empty()) throw UsageError("--out is required");
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("output " + dir.string() + " is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output " + dir.string() + " exists and is not empty (use --force)");
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(dir);
}

fs::path corpus_manifest(const fs::path& dir) {
  const auto m = dir / "manifest.jsonl";
  if (!fs::exists(m)) throw UsageError("no corpus at " + dir.string() + " (missing manifest.jsonl)");
  return m;
}

fs::path checkpoint_file(const fs::path& p) {
  const auto f = fs::is_directory(p) ? p / "checkpoint.bin" : p;
  if (!fs::exists(f)) throw UsageError("no checkpoint at " + p.string());
  return f;
}

void validate_or_usage(const train::TrainConfig& cfg) {
  try {
    train::validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

bool corpus_has(const data::Corpus& corpus, eval::LabelField field) {
  return std::any_of(corpus.begin(), corpus.end(), [field](const data::Recording& r) {
    return field == eval::LabelField::State ? r.labels.has_value() : r.subject_attribute.has_value();
  });
}

void require_window_fits(const data::Corpus& corpus, double window_s) {
  for (const auto& r : corpus) {
    if (r.duration() < window_s) {
      throw UsageError("record " + r.subject_id + "/" + r.record_id + " lasts " + std::to_string(r.duration()) +
                       " s, shorter than the W = " + std::to_string(window_s) + " s window");
    }
  }
}

void require_labels(const data::Corpus& corpus, eval::LabelField field) {
  if (!corpus_has(corpus, field)) throw UsageError("corpus has no " + eval::to_string(field) + " labels");
}

json config_without_iterations(const train::TrainConfig& cfg) {
  json j = cfg;
  j.erase("iterations");
  j.erase("checkpoint_every");
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void run_training(const train::TrainConfig& cfg, const data::Corpus& corpus, const fs::path& out, bool resume,
                  std::size_t log_every, const Log& log, const std::string& tag = "") {
  std::optional<train::Trainer> trainer;
  const Log trainer_log = [&](const std::string& s) { log(tag + s); };
  if (resume) {
    trainer.emplace(train::Trainer::resume(out / "checkpoint.bin", cfg, corpus, trainer_log));
    log(tag + "resuming at iteration " + std::to_string(trainer->iteration()));
  } else {
    trainer.emplace(cfg, corpus, trainer_log);
  }
  trainer->run(out, [&](const train::StepMetrics& m) {
    if (log_every > 0 && (m.iter % log_every == 0 || m.iter + 1 == cfg.iterations)) {
      char line[160];
      std::snprintf(line, sizeof line, "iter %zu/%zu  l_iv %.5f  l_tv %.5f  total %.5f  grad %.3g  gap %.3g  %.0f ms",
                    m.iter + 1, cfg.iterations, m.l_iv, m.l_tv, m.total, m.grad_norm, m.ema_gap, m.ms);
      log(tag + line);
    }
  });
  write_loss_plot(out / "metrics.csv", out / "loss.svg");
}

eval::EmbeddingTable subset(const eval::EmbeddingTable& table, const std::set<std::string>& keys) {
  eval::EmbeddingTable out;
  out.dim = table.dim;
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (keys.count(table.rows[r].record_key())) out.append(table.rows[r], table.row(r));
  }
  return out;
}

eval::ProbeReport linear_report(const eval::EmbeddingTable& table, eval::LabelField label, std::size_t folds,
                                bool loo, std::uint64_t seed) {
  eval::LinearProbeConfig cfg;
  cfg.seed = seed;
  if (!loo) return eval::linear_probe(table, label, folds, cfg);
  auto report = eval::leave_one_out(table, eval::linear_fold_probe(label, cfg));
  report.task = "linear_probe";
  report.label = eval::to_string(label);
  return report;
}

struct Disentangled {
  eval::FeatureClusterReport clusters;
  eval::NullBaseline baseline;
  json selection;
};

Disentangled disentangle_selected(const eval::EmbeddingTable& table, const data::Corpus& corpus, double select,
                                  std::size_t top, std::uint64_t seed) {
  std::set<std::string> keys;
  json selection = {{"threshold", select}, {"considered", corpus.size()}};
  if (corpus_has(corpus, eval::LabelField::State)) {
    for (const auto& r : data::select_dynamic_records(corpus, select)) keys.insert(r.subject_id + "/" + r.record_id);
  } else {
    selection["threshold"] = nullptr;
    for (const auto& r : corpus) keys.insert(r.subject_id + "/" + r.record_id);
  }
  selection["kept"] = std::vector<std::string>(keys.begin(), keys.end());
  if (keys.size() < 2) {
    throw std::runtime_error(std::to_string(keys.size()) + " record(s) pass the selection threshold " +
                             std::to_string(select) + "; the disentangling study needs two");
  }
  auto selected = subset(table, keys);
  eval::normalize_features(selected);
  Disentangled d;
  d.clusters = eval::disentangle(selected, top);
  d.baseline = eval::random_baseline(selected.dim, d.clusters.records.size(), top, 33, 2000, seed);
  d.selection = std::move(selection);
  return d;
}

json disentangle_json(const Disentangled& d) {
  return {{"selection", d.selection},
          {"clusters", d.clusters},
          {"baseline", d.baseline},
          {"top_min_invariant", d.clusters.top_invariant.empty() ? 0.0 : d.clusters.top_invariant.back().ratio},
          {"top_min_tempo_variant",
           d.clusters.top_tempo_variant.empty() ? 0.0 : d.clusters.top_tempo_variant.back().ratio}};
}

std::string format_w(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", w);
  return buf;
}

json synth_json(const data::SyntheticConfig& c) {
  return {{"subjects", c.subjects},
          {"states", c.states},
          {"duration_s", c.duration_s},
          {"fs", c.fs},
          {"noise", c.noise},
          {"mean_dwell_s", c.mean_dwell_s},
          {"rr_first", c.rr_first},
          {"rr_last", c.rr_last},
          {"t_gain_first", c.t_gain_first},
          {"t_gain_last", c.t_gain_last},
          {"hrv", c.hrv},
          {"baseline_wander", c.baseline_wander},
          {"max_template_correlation", c.max_template_correlation}};
}

}  // namespace

Prefilter parse_prefilter(const std::string& name) {
  if (name == "auto") return Prefilter::Auto;
  if (name == "always") return Prefilter::Always;
  if (name == "never") return Prefilter::Never;
  throw UsageError("unknown prefilter mode '" + name + "' (auto|always|never)");
}

data::Corpus load_corpus(const fs::path& dir, Prefilter mode) {
  corpus_manifest(dir);
  auto corpus = data::read_corpus(dir);
  const bool all_100 = std::all_of(corpus.begin(), corpus.end(), [](const auto& r) { return r.fs == 100.0; });
  if (mode == Prefilter::Always || (mode == Prefilter::Auto && !all_100)) return data::prefilter_corpus(corpus);
  if (!all_100) throw UsageError("corpus is not at 100 Hz; use --prefilter auto or always");
  return corpus;
}

train::TrainConfig resolve_config(const std::string& profile_flag, const fs::path& config_file,
                                  const std::vector<std::pair<std::string, std::string>>& flags) {
  std::optional<ConfigFile> file;
  if (!config_file.empty()) file = read_config(config_file);
  std::string profile = "desk";
  if (file && file->get("profile")) profile = *file->get("profile");
  if (!profile_flag.empty()) profile = profile_flag;
  train::TrainConfig cfg;
  try {
    cfg = train::train_profile(profile);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (file) apply_config(*file, cfg);
  for (const auto& [key, value] : flags) set_config_value(cfg, key, value);
  return cfg;
}

void cmd_gen(const GenRequest& req, std::ostream& log) {
  try {
    data::validate(req.synth);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  prepare_output(req.out, req.force);
  RunManifest m;
  m.command = "gen";
  m.argv = req.argv;
  m.config = synth_json(req.synth);
  m.seed = req.seed;
  m.outputs = {(req.out / "manifest.jsonl").string()};
  write_manifest(req.out / "run.json", m);

  const auto corpus = data::generate_synthetic(req.synth, req.seed);
  data::write_corpus(req.out, corpus.records, true);
  log << "wrote " << corpus.records.size() << " records to " << req.out.string() << '\n';
}

void cmd_train(const TrainRequest& req, std::ostream& log_stream) {
  validate_or_usage(req.config);
  const auto manifest_path = corpus_manifest(req.corpus);
  if (req.out.empty()) throw UsageError("--out is required");
  const auto corpus = load_corpus(req.corpus, req.prefilter);
  require_window_fits(corpus, req.config.window_s);
  if (req.resume) {
    if (!fs::exists(req.out / "checkpoint.bin")) throw UsageError("nothing to resume in " + req.out.string());
  } else {
    prepare_output(req.out, req.force);
  }
  RunManifest m;
  m.command = "train";
  m.argv = req.argv;
  m.config = req.config;
  m.seed = req.config.seed;
  m.inputs = req.extra_inputs;
  m.inputs[manifest_path.string()] = data::sha256_file(manifest_path);
  if (req.resume) m.inputs[(req.out / "checkpoint.bin").string()] = data::sha256_file(req.out / "checkpoint.bin");
  m.outputs = {(req.out / "metrics.csv").string(), (req.out / "checkpoint.bin").string(),
               (req.out / "loss.svg").string()};
  write_manifest(next_manifest_path(req.out), m);
  run_training(req.config, corpus, req.out, req.resume, req.log_every, stream_log(log_stream));
}

Task parse_task(const std::string& name) {
  if (name == "probe") return Task::Probe;
  if (name == "sequence") return Task::Sequence;
  if (name == "disentangle") return Task::Disentangle;
  if (name == "importance") return Task::Importance;
  throw UsageError("unknown task '" + name + "' (probe|sequence|disentangle|importance)");
}

std::string to_string(Task task) {
  switch (task) {
    case Task::Probe: return "probe";
    case Task::Sequence: return "sequence";
    case Task::Disentangle: return "disentangle";
    case Task::Importance: return "importance";
  }
  return "?";
}

json cmd_eval(const EvalRequest& req, std::ostream& log) {
  const auto ckpt = checkpoint_file(req.checkpoint);
  const auto manifest_path = corpus_manifest(req.corpus);
  if (req.folds < 2 && !req.loo) throw UsageError("--folds must be at least 2");
  if (req.out.empty()) throw UsageError("--out is required");
  const auto corpus = load_corpus(req.corpus, req.prefilter);
  if (req.task != Task::Disentangle) require_labels(corpus, req.label);

  prepare_output(req.out, req.force);
  RunManifest m;
  m.command = "eval";
  m.argv = req.argv;
  m.config = {{"task", to_string(req.task)}, {"label", eval::to_string(req.label)},
              {"folds", req.folds},          {"loo", req.loo},
              {"select", req.select},        {"top", req.top}};
  m.seed = req.seed;
  m.inputs[ckpt.string()] = data::sha256_file(ckpt);
  m.inputs[manifest_path.string()] = data::sha256_file(manifest_path);
  m.outputs = {(req.out / "report.json").string(), (req.out / "embeddings").string()};
  if (req.task == Task::Disentangle || req.task == Task::Importance) {
    m.outputs.push_back((req.out / "disentangle.svg").string());
  }
  write_manifest(req.out / "run.json", m);

  const auto pair = train::load_model(ckpt);
  const auto table = eval::export_embeddings(pair.student(), corpus);
  eval::write_table(req.out / "embeddings", table);
  log << "embedded " << table.size() << " strips from " << table.record_keys().size() << " records\n";

  json report = {{"task", to_string(req.task)}, {"checkpoint", ckpt.string()}, {"strips", table.size()}};
  switch (req.task) {
    case Task::Probe: {
      const auto r = linear_report(table, req.label, req.folds, req.loo, req.seed);
      report["report"] = r;
      log << "linear probe (" << r.label << "): accuracy " << r.aggregate.accuracy << " over " << r.evaluated
          << " folds\n";
      break;
    }
    case Task::Sequence: {
      eval::SequenceProbeConfig cfg;
      cfg.seed = req.seed;
      const auto r = eval::sequence_probe(table, req.label, cfg);
      report["report"] = r;
      log << "sequence probe (" << r.label << "): accuracy " << r.aggregate.accuracy << " over " << r.evaluated
          << " folds\n";
      break;
    }
    case Task::Disentangle:
    case Task::Importance: {
      const auto d = disentangle_selected(table, corpus, req.select, req.top, req.seed);
      report["disentangle"] = disentangle_json(d);
      write_disentangle_plot(d.clusters, d.baseline.mean_ratio, req.out / "disentangle.svg");
      log << "disentangle over " << d.clusters.records.size() << " records: top-" << req.top
          << " minimum ratio invariant " << report["disentangle"]["top_min_invariant"].get<double>()
          << ", tempo-variant " << report["disentangle"]["top_min_tempo_variant"].get<double>()
          << " (random mean " << d.baseline.mean_ratio << ")\n";
      if (req.task == Task::Importance) {
        eval::LinearProbeConfig cfg;
        cfg.seed = req.seed;
        const auto r = eval::importance_study(table, req.label, d.clusters, cfg);
        report["importance"] = r;
        log << "importance (" << r.label << "): top-" << r.top_k << " overlap invariant " << r.overlap_invariant
            << ", tempo-variant " << r.overlap_tempo_variant << " (expected " << r.expected_overlap << ")\n";
      }
      break;
    }
  }
  write_json(req.out / "report.json", report);
  return report;
}

std::vector<GridCell> sensitivity_grid() { return {{3, 120.0}, {4, 120.0}, {5, 120.0}, {4, 90.0}, {4, 150.0}}; }

std::vector<GridCell> parse_grid(const std::string& spec, const train::TrainConfig& base, bool full) {
  std::vector<std::size_t> ns;
  std::vector<double> ws;
  std::istringstream in(spec);
  std::string part;
  while (in >> part) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw UsageError("grid term '" + part + "' is not AXIS=v1,v2,...");
    const std::string axis = part.substr(0, eq);
    std::istringstream values(part.substr(eq + 1));
    std::string v;
    while (std::getline(values, v, ',')) {
      if (v.empty()) continue;
      train::TrainConfig probe;
      if (axis == "N") {
        set_config_value(probe, "N", v);
        ns.push_back(probe.n);
      } else if (axis == "W") {
        set_config_value(probe, "W", v);
        ws.push_back(probe.window_s);
      } else {
        throw UsageError("unknown grid axis '" + axis + "' (N or W)");
      }
    }
  }
  if (ns.empty() && ws.empty()) throw UsageError("empty grid");
  std::vector<GridCell> cells;
  auto add = [&](GridCell c) {
    if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
  };
  if (full) {
    if (ns.empty()) ns.push_back(base.n);
    if (ws.empty()) ws.push_back(base.window_s);
    for (auto n : ns) {
      for (auto w : ws) add({n, w});
    }
  } else {
    for (auto n : ns) add({n, base.window_s});
    for (auto w : ws) add({base.n, w});
  }
  return cells;
}

std::string cell_name(const GridCell& cell) { return "N" + std::to_string(cell.n) + "_W" + format_w(cell.w); }

std::vector<AblationRow> cmd_ablate(const AblateRequest& req, std::ostream& log_stream) {
  if (req.grid.empty()) throw UsageError("empty grid");
  if (req.out.empty()) throw UsageError("--out is required");
  if (req.folds < 2) throw UsageError("--folds must be at least 2");
  std::vector<train::TrainConfig> configs;
  for (const auto& cell : req.grid) {
    auto cfg = req.base;
    cfg.n = cell.n;
    cfg.window_s = cell.w;
    try {
      train::validate(cfg);
    } catch (const std::invalid_argument& e) {
      throw UsageError("grid cell " + cell_name(cell) + ": " + e.what());
    }
    configs.push_back(cfg);
  }
  const auto manifest_path = corpus_manifest(req.corpus);
  const auto corpus = load_corpus(req.corpus, req.prefilter);
  for (const auto& cfg : configs) require_window_fits(corpus, cfg.window_s);
  require_labels(corpus, eval::LabelField::State);
  require_labels(corpus, eval::LabelField::Attribute);

  if (req.force) prepare_output(req.out, true);
  fs::create_directories(req.out);
  RunManifest m;
  m.command = "ablate";
  m.argv = req.argv;
  json grid = json::array();
  for (const auto& c : req.grid) grid.push_back({{"N", c.n}, {"W", c.w}});
  m.config = {{"base", req.base}, {"grid", grid}, {"folds", req.folds}, {"parallel", req.parallel}};
  m.seed = req.base.seed;
  m.inputs = req.extra_inputs;
  m.inputs[manifest_path.string()] = data::sha256_file(manifest_path);
  m.outputs = {(req.out / "table.csv").string(), (req.out / "cells").string()};
  write_manifest(next_manifest_path(req.out), m);

  const Log log = stream_log(log_stream);
  std::vector<AblationRow> rows(req.grid.size());
  std::vector<std::exception_ptr> errors(req.grid.size());
  std::atomic<std::size_t> next{0};

  auto work = [&](std::size_t i) {
    const auto& cell = req.grid[i];
    const auto& cfg = configs[i];
    const std::string tag = "[" + cell_name(cell) + "] ";
    const auto dir = req.out / "cells" / cell_name(cell);
    const auto result_path = dir / "result.json";
    if (fs::exists(result_path)) {
      std::ifstream in(result_path);
      const json done = json::parse(in);
      if (done.at("config") == json(cfg) && done.at("folds") == req.folds) {
        const auto& r = done.at("row");
        rows[i] = {cell, r.at("state_probe_acc"), r.at("sequence_probe_acc"), r.at("attribute_probe_acc")};
        log(tag + "already complete, skipped");
        return;
      }
      fs::remove(result_path);
    }
    const auto train_dir = dir / "train";
    bool resume = false;
    if (fs::exists(train_dir / "checkpoint.bin")) {
      const auto saved = model::load_checkpoint(train_dir / "checkpoint.bin").header.at("config");
      resume = config_without_iterations(saved.get<train::TrainConfig>()) == config_without_iterations(cfg) &&
               saved.at("iterations").get<std::size_t>() <= cfg.iterations;
    }
    if (!resume) prepare_output(train_dir, true);
    RunManifest tm;
    tm.command = "train";
    tm.argv = req.argv;
    tm.config = cfg;
    tm.seed = cfg.seed;
    tm.inputs[manifest_path.string()] = m.inputs[manifest_path.string()];
    tm.outputs = {(train_dir / "metrics.csv").string(), (train_dir / "checkpoint.bin").string(),
                  (train_dir / "loss.svg").string()};
    write_manifest(next_manifest_path(train_dir), tm);
    run_training(cfg, corpus, train_dir, resume, req.log_every, log, tag);

    const auto pair = train::load_model(train_dir / "checkpoint.bin");
    const auto table = eval::export_embeddings(pair.student(), corpus);
    const auto state = linear_report(table, eval::LabelField::State, req.folds, false, 0);
    const auto sequence = eval::sequence_probe(table, eval::LabelField::State);
    const auto attribute = linear_report(table, eval::LabelField::Attribute, req.folds, false, 0);
    rows[i] = {cell, state.aggregate.accuracy, sequence.aggregate.accuracy, attribute.aggregate.accuracy};
    const json row = {{"N", cell.n},
                      {"W", cell.w},
                      {"state_probe_acc", rows[i].state_probe_acc},
                      {"sequence_probe_acc", rows[i].sequence_probe_acc},
                      {"attribute_probe_acc", rows[i].attribute_probe_acc}};
    write_json(dir / "result.tmp",
               {{"config", cfg},
                {"folds", req.folds},
                {"row", row},
                {"state_probe", state},
                {"sequence_probe", sequence},
                {"attribute_probe", attribute}});
    fs::rename(dir / "result.tmp", result_path);
    log(tag + "state " + std::to_string(rows[i].state_probe_acc) + ", sequence " +
        std::to_string(rows[i].sequence_probe_acc) + ", attribute " + std::to_string(rows[i].attribute_probe_acc));
  };
  auto worker = [&] {
    for (std::size_t i = next++; i < req.grid.size(); i = next++) {
      try {
        work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(req.parallel, 1, req.grid.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ofstream csv(req.out / "table.csv");
  if (!csv) throw std::runtime_error("cannot write " + (req.out / "table.csv").string());
  csv << kAblationHeader << '\n';
  for (const auto& r : rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%zu,%s,%.4f,%.4f,%.4f", r.cell.n, format_w(r.cell.w).c_str(), r.state_probe_acc,
                  r.sequence_probe_acc, r.attribute_probe_acc);
    csv << line << '\n';
  }
  return rows;
}

}  // namespace plita::cli
