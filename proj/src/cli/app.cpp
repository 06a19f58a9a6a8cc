#include <CLI11.hpp>

#include "plita/cli/commands.hpp"
#include "plita/cli/manifest.hpp"
#include "plita/data/corpus_io.hpp"

namespace plita::cli {

namespace {

struct TrainFlags {
  std::string profile, config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<CLI::Option*, std::string>> options;
  std::map<std::string, std::string> values;

  void add_to(CLI::App& app, bool with_grid_axes) {
    app.add_option("--profile", profile, "desk | paper (defaults before the config file)");
    app.add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    struct Flag {
      const char* flag;
      const char* key;
      const char* help;
    };
    static const Flag flags[] = {
        {"--iterations", "iterations", "training iterations K"},
        {"--batch", "batch", "subjects per batch B"},
        {"--N", "N", "strips per window"},
        {"--W", "W", "window length, seconds"},
        {"--lr", "lr", "learning rate"},
        {"--weight-decay", "weight_decay", "decoupled weight decay"},
        {"--metric", "metric", "cosine | euclidean"},
        {"--enable-iv", "enable_iv", "true | false"},
        {"--enable-tv", "enable_tv", "true | false"},
        {"--split", "split", "shared | halves (projector input)"},
        {"--augment", "augment", "none | reverse | flip | reverse+flip"},
        {"--seed", "seed", "run seed"},
        {"--checkpoint-every", "checkpoint_every", "checkpoint period, iterations (0: end only)"},
        {"--quality", "quality", "none | flatline | clipping | flatline+clipping"},
    };
    for (const auto& f : flags) {
      if (!with_grid_axes && (std::string(f.key) == "N" || std::string(f.key) == "W")) continue;
      options.emplace_back(app.add_option(f.flag, values[f.key], f.help), f.key);
    }
    app.add_option("--set", sets, "any config key, as key=value (repeatable)");
  }

  train::TrainConfig resolve() const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& [opt, key] : options) {
      if (opt->count() > 0) overrides.emplace_back(key, values.at(key));
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return resolve_config(profile, config_file, overrides);
  }

  std::map<std::string, std::string> inputs() const {
    if (config_file.empty()) return {};
    return {{config_file, data::sha256_file(config_file)}};
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Tempo-aware self-supervised ECG representation learning"};
  app.name("plita");
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  const std::string data_dir = data::default_data_dir().string();

  GenRequest gen;
  gen.out = data_dir;
  auto* g = app.add_subcommand("gen", "generate a synthetic labeled corpus");
  g->add_option("--subjects", gen.synth.subjects, "subjects (two records each)")->capture_default_str();
  g->add_option("--states", gen.synth.states, "physiological states K >= 2")->capture_default_str();
  g->add_option("--duration", gen.synth.duration_s, "record length, seconds")->capture_default_str();
  g->add_option("--noise", gen.synth.noise, "additive noise std")->capture_default_str();
  g->add_option("--fs", gen.synth.fs, "sampling rate, Hz")->capture_default_str();
  g->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  g->add_option("--out", gen.out, "corpus directory (default $PLITA_DATA_DIR or ./data)");
  g->add_flag("--force", gen.force, "replace a non-empty output directory");

  TrainFlags train_flags;
  TrainRequest tr;
  tr.corpus = data_dir;
  std::string tr_prefilter = "auto";
  auto* t = app.add_subcommand("train", "self-supervised training");
  train_flags.add_to(*t, true);
  t->add_option("--corpus", tr.corpus, "corpus directory (default $PLITA_DATA_DIR or ./data)");
  t->add_option("--out", tr.out, "run directory")->required();
  t->add_flag("--force", tr.force, "replace a non-empty output directory");
  t->add_flag("--resume", tr.resume, "continue from <out>/checkpoint.bin");
  t->add_option("--prefilter", tr_prefilter, "auto | always | never");
  t->add_option("--log-every", tr.log_every, "progress period, iterations")->capture_default_str();

  EvalRequest ev;
  ev.corpus = data_dir;
  std::string ev_task, ev_label = "state", ev_prefilter = "auto";
  auto* e = app.add_subcommand("eval", "evaluate a trained encoder");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file or training directory")->required();
  e->add_option("--corpus", ev.corpus, "corpus directory (default $PLITA_DATA_DIR or ./data)");
  e->add_option("--task", ev_task, "probe | sequence | disentangle | importance")->required();
  e->add_option("--label", ev_label, "state | attribute")->capture_default_str();
  e->add_option("--folds", ev.folds, "subject-disjoint folds for the linear probe")->capture_default_str();
  e->add_flag("--loo", ev.loo, "leave-one-record-out folds");
  e->add_option("--select", ev.select, "maximum modal label fraction for disentangling records")
      ->capture_default_str();
  e->add_option("--top", ev.top, "features reported per cluster")->capture_default_str();
  e->add_option("--seed", ev.seed, "probe seed")->capture_default_str();
  e->add_option("--out", ev.out, "report directory")->required();
  e->add_flag("--force", ev.force, "replace a non-empty output directory");
  e->add_option("--prefilter", ev_prefilter, "auto | always | never");

  TrainFlags ablate_flags;
  AblateRequest ab;
  ab.corpus = data_dir;
  std::string grid_spec, ab_prefilter = "auto";
  bool full_grid = false;
  auto* a = app.add_subcommand("ablate", "train and evaluate over an (N, W) grid");
  ablate_flags.add_to(*a, false);
  a->add_option("--base-config", ablate_flags.config_file, "key = value base config")->check(CLI::ExistingFile);
  a->add_option("--grid", grid_spec, "e.g. \"N=3,4,5 W=90,120,150\" (default: the five sensitivity rows)");
  a->add_flag("--full-grid", full_grid, "cartesian product instead of a star around the base config");
  a->add_option("--parallel", ab.parallel, "cells run at once")->capture_default_str();
  a->add_option("--folds", ab.folds, "subject-disjoint probe folds")->capture_default_str();
  a->add_option("--corpus", ab.corpus, "corpus directory (default $PLITA_DATA_DIR or ./data)");
  a->add_option("--out", ab.out, "sweep directory")->required();
  a->add_flag("--force", ab.force, "discard completed cells and start over");
  a->add_option("--prefilter", ab_prefilter, "auto | always | never");
  a->add_option("--log-every", ab.log_every, "progress period, iterations")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version() << '\n';
    return 0;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "run '" << sub->get_name() << " --help' for usage\n";
    return 2;
  }

  try {
    if (g->parsed()) {
      gen.argv = args;
      cmd_gen(gen, err);
    } else if (t->parsed()) {
      tr.config = train_flags.resolve();
      tr.prefilter = parse_prefilter(tr_prefilter);
      tr.argv = args;
      tr.extra_inputs = train_flags.inputs();
      cmd_train(tr, err);
      out << "trained " << tr.config.iterations << " iterations into " << tr.out.string() << '\n';
    } else if (e->parsed()) {
      ev.task = parse_task(ev_task);
      try {
        ev.label = eval::parse_label_field(ev_label);
      } catch (const std::invalid_argument& ex) {
        throw UsageError(ex.what());
      }
      ev.prefilter = parse_prefilter(ev_prefilter);
      ev.argv = args;
      cmd_eval(ev, err);
      out << "report written to " << (ev.out / "report.json").string() << '\n';
    } else if (a->parsed()) {
      ab.base = ablate_flags.resolve();
      ab.grid = grid_spec.empty() ? sensitivity_grid() : parse_grid(grid_spec, ab.base, full_grid);
      ab.prefilter = parse_prefilter(ab_prefilter);
      ab.argv = args;
      ab.extra_inputs = ablate_flags.inputs();
      cmd_ablate(ab, err);
      std::ifstream table(ab.out / "table.csv");
      out << table.rdbuf();
    }
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& ex) {
    err << "usage error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace plita::cli
