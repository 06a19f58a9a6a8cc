#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "plita/cli/config_file.hpp"
#include "plita/data/synthetic.hpp"
#include "plita/eval/embeddings.hpp"
#include "plita/eval/probe.hpp"
#include "plita/train/trainer.hpp"

namespace plita::cli {

namespace fs = std::filesystem;

/// auto: records not at 100 Hz are resampled and high-passed, 100 Hz records
/// are taken as already prefiltered.
enum class Prefilter { Auto, Always, Never };
Prefilter parse_prefilter(const std::string& name);

data::Corpus load_corpus(const fs::path& dir, Prefilter mode = Prefilter::Auto);

/// Profile defaults, then the config file, then `flags` (key, value) in order.
train::TrainConfig resolve_config(const std::string& profile_flag, const fs::path& config_file,
                                  const std::vector<std::pair<std::string, std::string>>& flags);

struct GenRequest {
  data::SyntheticConfig synth;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
  std::vector<std::string> argv;
};

void cmd_gen(const GenRequest& req, std::ostream& log);

struct TrainRequest {
  train::TrainConfig config;
  fs::path corpus, out;
  bool force = false;
  bool resume = false;
  Prefilter prefilter = Prefilter::Auto;
  std::size_t log_every = 100;
  std::vector<std::string> argv;
  std::map<std::string, std::string> extra_inputs;  // path -> sha256
};

/// Writes run.json (run.<k>.json when resuming), metrics.csv, checkpoint.bin and loss.svg under `out`.
void cmd_train(const TrainRequest& req, std::ostream& log);

enum class Task { Probe, Sequence, Disentangle, Importance };
Task parse_task(const std::string& name);
std::string to_string(Task task);

struct EvalRequest {
  fs::path checkpoint;  // a checkpoint file or a training directory
  fs::path corpus, out;
  Task task = Task::Probe;
  eval::LabelField label = eval::LabelField::State;
  std::size_t folds = 4;
  bool loo = false;
  /// Disentangle/importance keep records whose modal label fraction is at most this.
  double select = 0.8;
  std::size_t top = 20;
  bool force = false;
  Prefilter prefilter = Prefilter::Auto;
  std::uint64_t seed = 0;
  std::vector<std::string> argv;
};

/// Writes run.json, report.json, the embedding table under embeddings/ and,
/// for disentangle and importance, disentangle.svg. Returns the report.
nlohmann::json cmd_eval(const EvalRequest& req, std::ostream& log);

struct GridCell {
  std::size_t n = 4;
  double w = 120.0;
  bool operator==(const GridCell&) const = default;
};

/// The five rows of the sensitivity table: (3,120) (4,120) (5,120) (4,90) (4,150).
std::vector<GridCell> sensitivity_grid();

/// "N=3,4,5 W=90,120,150". Star layout by default: each N with the base W,
/// then each W with the base N, duplicates removed. `full` takes the product.
std::vector<GridCell> parse_grid(const std::string& spec, const train::TrainConfig& base, bool full = false);

std::string cell_name(const GridCell& cell);

struct AblateRequest {
  train::TrainConfig base;
  fs::path corpus, out;
  std::vector<GridCell> grid;
  std::size_t parallel = 1;
  std::size_t folds = 4;
  bool force = false;
  Prefilter prefilter = Prefilter::Auto;
  std::size_t log_every = 100;
  std::vector<std::string> argv;
  std::map<std::string, std::string> extra_inputs;
};

struct AblationRow {
  GridCell cell;
  double state_probe_acc = 0.0, sequence_probe_acc = 0.0, attribute_probe_acc = 0.0;
};

inline constexpr const char* kAblationHeader = "N,W,state_probe_acc,sequence_probe_acc,attribute_probe_acc";

/// Trains and evaluates every cell under out/cells/<N..._W...>, skipping cells
/// whose result.json matches the cell config, and writes out/table.csv.
std::vector<AblationRow> cmd_ablate(const AblateRequest& req, std::ostream& log);

/// Full command line. Returns 0 on success, 1 on runtime failure, 2 on usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace plita::cli
