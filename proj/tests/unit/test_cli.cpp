#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "plita/cli/commands.hpp"
#include "plita/cli/config_file.hpp"
#include "plita/cli/manifest.hpp"
#include "plita/cli/plot.hpp"
#include "plita/data/corpus_io.hpp"
#include "plita/model/checkpoint.hpp"

namespace plita::cli {
namespace {

using nlohmann::json;

fs::path root() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "plita_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "plita");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kTiny =
    "# tiny model\n"
    "depth = 1\n"
    "dim = 16\n"
    "heads = 2\n"
    "mlp_ratio = 2\n"
    "projector_hidden = 16\n"
    "projector_out = 16\n"
    "predictor_hidden = 8\n"
    "batch = 2\n"
    "N = 3\n"
    "W = 60\n"
    "iterations = 8\n"
    "checkpoint_every = 0\n";

fs::path tiny_config() {
  const auto p = root() / "tiny.cfg";
  if (!fs::exists(p)) std::ofstream(p) << kTiny;
  return p;
}

fs::path corpus() {
  const auto dir = root() / "corpus";
  if (!fs::exists(dir / "manifest.jsonl")) {
    const auto r = cli({"gen", "--subjects", "4", "--duration", "150", "--seed", "3", "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
  }
  return dir;
}

void expect_same_tensors(const fs::path& a, const fs::path& b) {
  const auto x = model::load_checkpoint(a), y = model::load_checkpoint(b);
  ASSERT_EQ(x.tensors.size(), y.tensors.size());
  for (std::size_t i = 0; i < x.tensors.size(); ++i) {
    EXPECT_EQ(x.tensors[i].first, y.tensors[i].first);
    EXPECT_EQ(x.tensors[i].second.data, y.tensors[i].second.data) << x.tensors[i].first;
  }
}

TEST(ConfigFileTest, ParsesCommentsAndBlankLines) {
  std::istringstream in("# header\n\n  lr = 0.001  # trailing\nmetric=euclidean\n");
  const auto f = parse_config(in, "x.cfg");
  ASSERT_EQ(f.entries.size(), 2u);
  EXPECT_EQ(f.entries[0].key, "lr");
  EXPECT_EQ(f.entries[0].value, "0.001");
  EXPECT_EQ(f.entries[0].line, 3u);
  EXPECT_EQ(*f.get("metric"), "euclidean");
  EXPECT_FALSE(f.get("seed").has_value());
}

TEST(ConfigFileTest, ErrorsNameTheLine) {
  std::istringstream missing_eq("lr 0.1\n");
  EXPECT_THROW(parse_config(missing_eq), UsageError);

  std::istringstream unknown("seed = 1\nlearning_rate = 0.1\n");
  train::TrainConfig cfg;
  try {
    apply_config(parse_config(unknown, "a.cfg"), cfg);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("a.cfg:2"), std::string::npos) << e.what();
  }

  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"N", "four"}, {"N", "-1"}, {"lr", "1e-3x"}, {"enable_tv", "maybe"}, {"metric", "manhattan"},
           {"split", "thirds"}, {"augment", "mirror"}, {"quality", "perfect"}}) {
    EXPECT_THROW(set_config_value(cfg, k, v), UsageError) << k << "=" << v;
  }
}

TEST(ConfigFileTest, FlagsOverrideFileOverrideProfile) {
  const auto path = root() / "precedence.cfg";
  std::ofstream(path) << "profile = paper\nlr = 0.002\nseed = 9\nbatch = 12\n";

  const auto from_file = resolve_config("", path, {});
  EXPECT_EQ(from_file.profile, "paper");
  EXPECT_EQ(from_file.iterations, train::train_profile("paper").iterations);
  EXPECT_EQ(from_file.model.encoder.depth, 6u);
  EXPECT_DOUBLE_EQ(from_file.lr, 0.002);
  EXPECT_EQ(from_file.batch, 12u);

  const auto flagged = resolve_config("desk", path, {{"lr", "0.005"}, {"dim", "32"}});
  EXPECT_EQ(flagged.iterations, train::train_profile("desk").iterations);
  EXPECT_EQ(flagged.model.encoder.depth, 2u);
  EXPECT_DOUBLE_EQ(flagged.lr, 0.005);
  EXPECT_EQ(flagged.seed, 9u);
  EXPECT_EQ(flagged.model.encoder.dim, 32u);

  EXPECT_THROW(resolve_config("laptop", "", {}), UsageError);
}

TEST(ConfigFileTest, FormattedConfigReadsBackIdentically) {
  auto cfg = train::train_profile("desk");
  cfg.lr = 1.0 / 3.0;
  cfg.metric = losses::Metric::Euclidean;
  cfg.augment = {.reverse = true, .flip = true};
  cfg.model.head.split = true;
  cfg.enable_tv = false;
  cfg.quality = "flatline+clipping";
  std::istringstream in(format_config(cfg));
  auto back = train::train_profile("desk");
  apply_config(parse_config(in), back);
  EXPECT_EQ(json(back), json(cfg));
  for (const auto& key : config_keys()) EXPECT_NE(format_config(cfg).find(key + " = "), std::string::npos) << key;
}

TEST(GridTest, DefaultGridIsTheSensitivityTable) {
  const std::vector<GridCell> expected = {{3, 120}, {4, 120}, {5, 120}, {4, 90}, {4, 150}};
  EXPECT_EQ(sensitivity_grid(), expected);
  EXPECT_EQ(parse_grid("N=3,4,5 W=90,120,150", train::train_profile("desk")), expected);
}

TEST(GridTest, FullGridAndErrors) {
  const auto base = train::train_profile("desk");
  EXPECT_EQ(parse_grid("N=3,4,5 W=90,120,150", base, true).size(), 9u);
  EXPECT_EQ(parse_grid("W=90", base), (std::vector<GridCell>{{4, 90}}));
  EXPECT_THROW(parse_grid("", base), UsageError);
  EXPECT_THROW(parse_grid("N=", base), UsageError);
  EXPECT_THROW(parse_grid("B=3", base), UsageError);
  EXPECT_THROW(parse_grid("N3", base), UsageError);
  EXPECT_EQ(cell_name({4, 120}), "N4_W120");
  EXPECT_EQ(cell_name({4, 92.5}), "N4_W92.5");
}

TEST(PlotTest, ChartsAreStandaloneSvg) {
  const auto svg = line_chart("t<1>", "x", {{"a", {0, 1, 2}, {1, std::nan(""), 3}}});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("t&lt;1&gt;"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const auto bars = bar_chart("b", {{"p", {0.2, 0.9}, 0.33}});
  EXPECT_NE(bars.find("stroke-dasharray"), std::string::npos);
}

TEST(CliTest, ExitCodes) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({"train", "--help"}).code, 0);
  EXPECT_EQ(cli({"train", "--out", "x", "--bogus"}).code, 2);

  const auto states = cli({"gen", "--states", "1", "--out", (root() / "never").string()});
  EXPECT_EQ(states.code, 2);
  EXPECT_NE(states.err.find("states"), std::string::npos);
  EXPECT_FALSE(fs::exists(root() / "never"));

  const auto c = corpus().string();
  EXPECT_EQ(cli({"gen", "--out", c}).code, 2);
  const auto infeasible = cli({"train", "--corpus", c, "--W", "30", "--N", "4", "--out", (root() / "bad").string()});
  EXPECT_EQ(infeasible.code, 2);
  EXPECT_NE(infeasible.err.find("(W - 10)/(N - 1)"), std::string::npos) << infeasible.err;
  EXPECT_EQ(cli({"train", "--corpus", c, "--metric", "l1", "--out", (root() / "bad").string()}).code, 2);
  EXPECT_EQ(cli({"train", "--corpus", (root() / "nothing").string(), "--out", (root() / "bad").string()}).code, 2);
  EXPECT_EQ(cli({"eval", "--checkpoint", (root() / "nothing").string(), "--task", "probe", "--corpus", c, "--out",
                 (root() / "bad").string()})
                .code,
            2);

  const auto garbage = root() / "garbage.bin";
  std::ofstream(garbage) << "not a checkpoint";
  const auto corrupt = cli({"eval", "--checkpoint", garbage.string(), "--task", "probe", "--corpus", c, "--out",
                            (root() / "corrupt").string()});
  EXPECT_EQ(corrupt.code, 1) << corrupt.err;
}

TEST(CliTest, GenDefaultsAndDeterminism) {
  const auto a = root() / "gen_a", b = root() / "gen_b";
  ASSERT_EQ(cli({"gen", "--seed", "7", "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"gen", "--seed", "7", "--out", b.string()}).code, 0);
  const auto corpus_a = data::read_corpus(a);
  ASSERT_EQ(corpus_a.size(), 16u);
  for (const auto& r : corpus_a) {
    EXPECT_DOUBLE_EQ(r.duration(), 600.0);
    EXPECT_TRUE(r.labels.has_value());
    EXPECT_TRUE(r.subject_attribute.has_value());
  }
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().filename() != "run.json") {
      EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename()));
    }
  }
  const auto m = read_manifest(a / "run.json");
  EXPECT_EQ(m.command, "gen");
  EXPECT_EQ(m.seed, 7u);
  EXPECT_EQ(m.config.at("subjects"), 8);

  ASSERT_EQ(cli({"gen", "--seed", "8", "--out", a.string(), "--force"}).code, 0);
  EXPECT_NE(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
}

TEST(CliTest, CorpusDirectoryDefaultsToEnvironment) {
  const auto dir = root() / "env_data";
  ::setenv("PLITA_DATA_DIR", dir.c_str(), 1);
  const auto r = cli({"gen", "--subjects", "2", "--duration", "60"});
  ::unsetenv("PLITA_DATA_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "manifest.jsonl"));
}

TEST(CliTest, TrainWritesManifestCheckpointAndPlot) {
  const auto out = root() / "train";
  const auto r = cli({"train", "--corpus", corpus().string(), "--config", tiny_config().string(), "--seed", "4",
                      "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"run.json", "metrics.csv", "checkpoint.bin", "loss.svg"}) EXPECT_TRUE(fs::exists(out / f)) << f;

  const auto m = read_manifest(out / "run.json");
  EXPECT_EQ(m.command, "train");
  EXPECT_EQ(m.version, version());
  const auto cfg = m.config.get<train::TrainConfig>();
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.model.encoder.dim, 16u);
  EXPECT_EQ(m.inputs.at((corpus() / "manifest.jsonl").string()), data::sha256_file(corpus() / "manifest.jsonl"));
  EXPECT_EQ(m.inputs.at(tiny_config().string()), data::sha256_file(tiny_config()));

  train::TrainConfig saved;
  train::load_model(out / "checkpoint.bin", &saved);
  EXPECT_EQ(json(saved), m.config);

  EXPECT_EQ(cli({"train", "--corpus", corpus().string(), "--config", tiny_config().string(), "--out", out.string()})
                .code,
            2);
}

TEST(CliTest, ManifestIsWrittenBeforeAFailingRun) {
  const auto out = root() / "diverged";
  const auto r = cli({"train", "--corpus", corpus().string(), "--config", tiny_config().string(), "--lr", "1e30",
                      "--out", out.string()});
  EXPECT_EQ(r.code, 1) << r.err;
  EXPECT_NE(r.err.find("iteration"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(out / "run.json"));

  const auto too_long = cli({"train", "--corpus", corpus().string(), "--config", tiny_config().string(), "--W",
                             "400", "--out", (root() / "too_long").string()});
  EXPECT_EQ(too_long.code, 2);
  EXPECT_NE(too_long.err.find("shorter than the W = 400"), std::string::npos) << too_long.err;
}

TEST(CliTest, ResumeMatchesOneRun) {
  const auto whole = root() / "whole", parts = root() / "parts";
  const auto base = std::vector<std::string>{"train", "--corpus", corpus().string(), "--config", tiny_config().string()};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  ASSERT_EQ(with({"--out", whole.string()}).code, 0);
  ASSERT_EQ(with({"--iterations", "5", "--out", parts.string()}).code, 0);
  const auto resumed = with({"--resume", "--out", parts.string()});
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  expect_same_tensors(whole / "checkpoint.bin", parts / "checkpoint.bin");
  EXPECT_TRUE(fs::exists(parts / "run.2.json"));
  EXPECT_EQ(with({"--resume", "--out", (root() / "empty_resume").string()}).code, 2);
}

TEST(CliTest, EvalTasksEmitReports) {
  const auto run_dir = root() / "eval_model";
  ASSERT_EQ(cli({"train", "--corpus", corpus().string(), "--config", tiny_config().string(), "--out",
                 run_dir.string()})
                .code,
            0);
  auto eval = [&](const std::string& name, std::vector<std::string> extra) {
    std::vector<std::string> args = {"eval", "--checkpoint", run_dir.string(), "--corpus", corpus().string(),
                                     "--out", (root() / name).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = cli(args);
    EXPECT_EQ(r.code, 0) << r.err;
    std::ifstream in(root() / name / "report.json");
    return json::parse(in);
  };

  const auto loo = eval("probe_loo", {"--task", "probe", "--loo"});
  EXPECT_EQ(loo["report"]["folds"].size(), 8u);
  EXPECT_TRUE(loo["report"]["audit"]["ok"].get<bool>());
  EXPECT_TRUE(fs::exists(root() / "probe_loo" / "embeddings" / "table.json"));
  EXPECT_EQ(read_manifest(root() / "probe_loo" / "run.json").command, "eval");

  const auto folds = eval("probe_attr", {"--task", "probe", "--label", "attribute", "--folds", "2"});
  EXPECT_EQ(folds["report"]["label"], "attribute");
  EXPECT_EQ(folds["report"]["folds"].size(), 2u);

  const auto seq = eval("sequence", {"--task", "sequence"});
  EXPECT_EQ(seq["report"]["task"], "sequence_probe");

  const auto dis = eval("disentangle", {"--task", "disentangle", "--select", "1"});
  EXPECT_EQ(dis["disentangle"]["clusters"]["cluster_size"], 5);
  EXPECT_EQ(dis["disentangle"]["selection"]["kept"].size(), 8u);
  EXPECT_TRUE(fs::exists(root() / "disentangle" / "disentangle.svg"));

  const auto imp = eval("importance", {"--task", "importance", "--select", "1"});
  EXPECT_EQ(imp["importance"]["ranking"].size(), 16u);
}

TEST(CliTest, LabeledTasksNeedLabels) {
  auto records = data::read_corpus(corpus());
  for (auto& r : records) {
    r.labels.reset();
    r.subject_attribute.reset();
  }
  const auto unlabeled = root() / "unlabeled";
  data::write_corpus(unlabeled, records, true);
  const auto model = root() / "unlabeled_model";
  ASSERT_EQ(cli({"train", "--corpus", unlabeled.string(), "--config", tiny_config().string(), "--iterations", "2",
                 "--out", model.string()})
                .code,
            0);
  for (const char* task : {"probe", "sequence", "importance"}) {
    const auto r = cli({"eval", "--checkpoint", model.string(), "--corpus", unlabeled.string(), "--task", task,
                        "--out", (root() / "unlabeled_eval").string()});
    EXPECT_EQ(r.code, 2) << task;
    EXPECT_NE(r.err.find("no state labels"), std::string::npos) << r.err;
  }
  const auto dis = cli({"eval", "--checkpoint", model.string(), "--corpus", unlabeled.string(), "--task",
                        "disentangle", "--out", (root() / "unlabeled_dis").string()});
  EXPECT_EQ(dis.code, 0) << dis.err;
}

TEST(CliTest, SingleCellAblationMatchesTrainPlusEval) {
  const auto sweep = root() / "sweep1";
  const auto r = cli({"ablate", "--corpus", corpus().string(), "--base-config", tiny_config().string(), "--grid",
                      "N=3 W=60", "--out", sweep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), kAblationHeader);

  const auto run_dir = root() / "sweep1_train";
  ASSERT_EQ(cli({"train", "--corpus", corpus().string(), "--config", tiny_config().string(), "--out",
                 run_dir.string()})
                .code,
            0);
  expect_same_tensors(sweep / "cells" / "N3_W60" / "train" / "checkpoint.bin", run_dir / "checkpoint.bin");

  std::ifstream in(sweep / "cells" / "N3_W60" / "result.json");
  const auto cell = json::parse(in);
  for (const auto& [label, key] : {std::pair{"state", "state_probe_acc"}, {"attribute", "attribute_probe_acc"}}) {
    const auto out = root() / (std::string("sweep1_eval_") + label);
    ASSERT_EQ(cli({"eval", "--checkpoint", run_dir.string(), "--corpus", corpus().string(), "--task", "probe",
                   "--label", label, "--out", out.string()})
                  .code,
              0);
    std::ifstream rep(out / "report.json");
    EXPECT_EQ(cell["row"][key].get<double>(), json::parse(rep)["report"]["aggregate"]["accuracy"].get<double>());
  }
  const auto seq_out = root() / "sweep1_eval_seq";
  ASSERT_EQ(cli({"eval", "--checkpoint", run_dir.string(), "--corpus", corpus().string(), "--task", "sequence",
                 "--out", seq_out.string()})
                .code,
            0);
  std::ifstream seq(seq_out / "report.json");
  EXPECT_EQ(cell["row"]["sequence_probe_acc"].get<double>(),
            json::parse(seq)["report"]["aggregate"]["accuracy"].get<double>());
}

TEST(CliTest, AblationResumesAndParallelMatchesSequential) {
  const auto seq = root() / "sweep_seq", par = root() / "sweep_par";
  const std::vector<std::string> common = {"ablate", "--corpus", corpus().string(), "--base-config",
                                           tiny_config().string(), "--grid", "N=3,4 W=60,70", "--iterations", "4"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = common;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  const auto first = with({"--out", seq.string()});
  ASSERT_EQ(first.code, 0) << first.err;
  const auto table = slurp(seq / "table.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);

  fs::remove(seq / "cells" / "N4_W60" / "result.json");
  const auto again = with({"--out", seq.string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(seq / "table.csv"), table);
  EXPECT_NE(again.err.find("[N3_W60] already complete"), std::string::npos);
  EXPECT_EQ(again.err.find("[N4_W60] already complete"), std::string::npos);
  EXPECT_TRUE(fs::exists(seq / "run.2.json"));

  const auto parallel = with({"--out", par.string(), "--parallel", "2"});
  ASSERT_EQ(parallel.code, 0) << parallel.err;
  EXPECT_EQ(slurp(par / "table.csv"), table);

  EXPECT_EQ(with({"--out", (root() / "sweep_bad").string(), "--grid", "N=9"}).code, 2);
  EXPECT_EQ(with({"--out", (root() / "sweep_bad").string(), "--grid", " "}).code, 2);
}

}  // namespace
}  // namespace plita::cli
