#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "plita/data/synthetic.hpp"
#include "plita/train/trainer.hpp"
#include "support/gradcheck.hpp"

namespace plita::train {
namespace {

namespace fs = std::filesystem;
using core::Tensor;

model::ModelConfig tiny_model() {
  model::ModelConfig m;
  m.encoder.depth = 1;
  m.encoder.dim = 8;
  m.encoder.heads = 2;
  m.encoder.mlp_ratio = 2;
  m.head.projector_hidden = 16;
  m.head.projector_out = 12;
  m.head.predictor_hidden = 8;
  return m;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.batch = 2;
  cfg.n = 3;
  cfg.window_s = 40.0;
  cfg.iterations = 20;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  cfg.checkpoint_every = 0;
  return cfg;
}

const data::Corpus& corpus() {
  static const data::Corpus c = [] {
    data::SyntheticConfig sc;
    sc.subjects = 3;
    sc.duration_s = 120.0;
    sc.fs = 100.0;
    return data::prefilter_corpus(data::generate_synthetic(sc, 11).records);
  }();
  return c;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("plita_trainer_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::string> metric_rows_without_time(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(line.substr(0, line.rfind(',')));
  return rows;
}

void expect_same_checkpoint(const model::Checkpoint& a, const model::Checkpoint& b) {
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
    EXPECT_EQ(a.tensors[i].second.data, b.tensors[i].second.data) << a.tensors[i].first;
  }
}

bool all_zero(const Tensor<float>& t) {
  for (float g : t.grad()) {
    if (g != 0.0f) return false;
  }
  return true;
}

TEST(TrainerTest, TeacherReceivesNoGradient) {
  Trainer t(tiny_config(), corpus());
  for (int i = 0; i < 2; ++i) {
    t.step();
    for (const auto& p : t.pair().teacher_parameters()) EXPECT_TRUE(all_zero(p.tensor)) << p.name;
  }
  bool any = false;
  for (const auto& p : t.pair().student_parameters()) any = any || !all_zero(p.tensor);
  EXPECT_TRUE(any);
}

void expect_branch_untouched(bool enable_iv, bool enable_tv, const std::string& idle) {
  auto cfg = tiny_config();
  cfg.enable_iv = enable_iv;
  cfg.enable_tv = enable_tv;
  Trainer t(cfg, corpus());
  t.step();
  std::size_t idle_count = 0;
  for (const auto& p : t.pair().student_parameters()) {
    const bool is_idle = p.name.rfind("proj_" + idle, 0) == 0 || p.name.rfind("pred_" + idle, 0) == 0;
    if (is_idle) {
      ++idle_count;
      EXPECT_TRUE(all_zero(p.tensor)) << p.name;
    } else if (p.name.rfind("encoder.", 0) == 0) {
      EXPECT_FALSE(all_zero(p.tensor)) << p.name;
    }
  }
  EXPECT_GT(idle_count, 0u);
}

TEST(TrainerTest, DisabledInvariantLossLeavesItsHeadsAlone) { expect_branch_untouched(false, true, "iv"); }

TEST(TrainerTest, DisabledTempoLossLeavesItsHeadsAlone) { expect_branch_untouched(true, false, "tv"); }

TEST(TrainerTest, BothLossesDisabledIsRejected) {
  auto cfg = tiny_config();
  cfg.enable_iv = cfg.enable_tv = false;
  EXPECT_THROW(Trainer(cfg, corpus()), std::invalid_argument);
}

TEST(TrainerTest, TeacherFollowsEmaOfUpdatedStudent) {
  Trainer t(tiny_config(), corpus());
  const double tau = t.pair().tau();
  for (int k = 0; k < 5; ++k) {
    std::vector<std::vector<float>> before;
    for (const auto& p : t.pair().teacher_parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    t.step();
    const auto xi = t.pair().teacher_parameters();
    const auto theta = t.pair().student().backbone_parameters();
    ASSERT_EQ(xi.size(), theta.size());
    for (std::size_t i = 0; i < xi.size(); ++i) {
      for (std::size_t j = 0; j < before[i].size(); ++j) {
        const double expect = tau * before[i][j] + (1.0 - tau) * theta[i].tensor.data()[j];
        ASSERT_NEAR(xi[i].tensor.data()[j], expect, 1e-6 * (1.0 + std::abs(expect))) << xi[i].name;
      }
    }
  }
}

TEST(TrainerTest, TotalLossMatchesFiniteDifferences) {
  model::ModelPair<double> pair(tiny_model(), 3);
  core::Rng rng = core::keyed_rng({17});
  const std::size_t b = 2, n = 3;
  auto x1 = testing::random_tensor({b * n, 1000}, rng);
  auto x2 = testing::random_tensor({b * n, 1000}, rng);
  // Teacher moved off the student.
  auto xi = pair.teacher_parameters();
  for (auto& p : xi) {
    for (auto& v : p.tensor.mutable_data()) v += 0.05 * core::normal(rng);
  }
  std::vector<Tensor<double>> leaves;
  for (const auto& p : pair.student_parameters()) leaves.push_back(p.tensor);
  for (auto metric : {losses::Metric::Cosine, losses::Metric::Euclidean}) {
    EXPECT_TRUE(testing::check_gradients(leaves, [&] {
      return compute_losses(pair, x1, x2, b, n, metric, true, true).total;
    }, {.step = 1e-7, .rtol = 1e-3, .atol = 1e-6}))
        << to_string(metric);
  }
}

TEST(TrainerTest, FixedBatchLossDecreases) {
  auto cfg = tiny_config();
  model::ModelPair<float> pair(cfg.model, 2);
  Trainer t(cfg, corpus());
  const auto batch = t.batch_for(0);
  const std::size_t b = batch.size(), n = batch.n;
  Tensor<float> x1({b * n, 1000}, batch.stacked(0));
  Tensor<float> x2({b * n, 1000}, batch.stacked(1));
  auto params = pair.student_parameters();
  core::Adam<float> adam({.lr = 3e-3, .weight_decay = 0.0});
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    for (auto& p : params) p.tensor.zero_grad();
    auto terms = compute_losses(pair, x1, x2, b, n, cfg.metric, true, true);
    if (i == 0) first = terms.total.item();
    last = terms.total.item();
    terms.total.backward();
    adam.step(params);
    pair.ema_update();
  }
  EXPECT_LT(last, 0.8 * first) << "first " << first << " last " << last;
}

TEST(TrainerTest, SeededRunsAreBitIdentical) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  Trainer(tiny_config(), corpus()).run(a);
  Trainer(tiny_config(), corpus()).run(b);
  EXPECT_EQ(metric_rows_without_time(a / "metrics.csv"), metric_rows_without_time(b / "metrics.csv"));
  expect_same_checkpoint(model::load_checkpoint(a / "checkpoint.bin"), model::load_checkpoint(b / "checkpoint.bin"));
  EXPECT_EQ(metric_rows_without_time(a / "metrics.csv").size(), 21u);
}

TEST(TrainerTest, ResumedRunMatchesUninterruptedRun) {
  auto cfg = tiny_config();
  cfg.iterations = 30;
  const auto whole = scratch("whole"), split = scratch("split");
  Trainer(cfg, corpus()).run(whole);

  auto half = cfg;
  half.iterations = 15;
  Trainer(half, corpus()).run(split);
  Trainer::resume(split / "checkpoint.bin", cfg, corpus()).run(split);

  EXPECT_EQ(metric_rows_without_time(whole / "metrics.csv"), metric_rows_without_time(split / "metrics.csv"));
  expect_same_checkpoint(model::load_checkpoint(whole / "checkpoint.bin"),
                         model::load_checkpoint(split / "checkpoint.bin"));
}

TEST(TrainerTest, ResumeFromOlderCheckpointDropsLaterMetricRows) {
  auto cfg = tiny_config();
  cfg.iterations = 20;
  const auto whole = scratch("whole20"), crashed = scratch("crashed");
  Trainer(cfg, corpus()).run(whole);

  auto part = cfg;
  part.iterations = 10;
  Trainer(part, corpus()).run(crashed);
  std::filesystem::copy_file(crashed / "checkpoint.bin", crashed / "at10.bin");
  part.iterations = 14;
  Trainer::resume(crashed / "checkpoint.bin", part, corpus()).run(crashed);
  Trainer::resume(crashed / "at10.bin", cfg, corpus()).run(crashed);

  EXPECT_EQ(metric_rows_without_time(whole / "metrics.csv"), metric_rows_without_time(crashed / "metrics.csv"));
}

TEST(TrainerTest, ResumeAppliesAndLogsNonStructuralChanges) {
  auto cfg = tiny_config();
  cfg.iterations = 2;
  const auto dir = scratch("relr");
  Trainer(cfg, corpus()).run(dir);
  auto changed = cfg;
  changed.lr = 5e-4;
  changed.iterations = 4;
  std::vector<std::string> lines;
  auto t = Trainer::resume(dir / "checkpoint.bin", changed, corpus(), [&](const std::string& s) { lines.push_back(s); });
  EXPECT_EQ(t.iteration(), 2u);
  EXPECT_DOUBLE_EQ(t.config().lr, 5e-4);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_NE(lines[0].find("lr"), std::string::npos);

  auto wider = cfg;
  wider.model.encoder.dim = 16;
  EXPECT_THROW(Trainer::resume(dir / "checkpoint.bin", wider, corpus()), ResumeError);
}

TEST(TrainerTest, PeriodicCheckpointsDoNotChangeTheRun) {
  auto cfg = tiny_config();
  cfg.iterations = 6;
  const auto a = scratch("every0"), b = scratch("every2");
  Trainer(cfg, corpus()).run(a);
  cfg.checkpoint_every = 2;
  Trainer(cfg, corpus()).run(b);
  expect_same_checkpoint(model::load_checkpoint(a / "checkpoint.bin"), model::load_checkpoint(b / "checkpoint.bin"));
}

TEST(TrainerTest, NonFiniteParametersAbortWithIteration) {
  Trainer t(tiny_config(), corpus());
  t.step();
  auto params = t.pair().student_parameters();
  params[0].tensor.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.step();
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.iteration(), 1u);
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos);
  }
}

TEST(TrainerTest, LoadModelRestoresBothNetworks) {
  const auto dir = scratch("load");
  auto cfg = tiny_config();
  cfg.iterations = 3;
  Trainer t(cfg, corpus());
  t.run(dir);
  TrainConfig loaded_cfg;
  auto pair = load_model(dir / "checkpoint.bin", &loaded_cfg);
  EXPECT_EQ(loaded_cfg.seed, cfg.seed);
  const auto a = pair.teacher_parameters(), b = t.pair().teacher_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
}

TEST(TrainerConfigTest, JsonRoundTripAndProfiles) {
  auto cfg = tiny_config();
  cfg.metric = losses::Metric::Euclidean;
  cfg.augment.flip = true;
  const nlohmann::json j = cfg;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(train_profile("paper").iterations, 35000u);
  EXPECT_EQ(train_profile("paper").batch, 256u);
  EXPECT_EQ(train_profile("desk").iterations, 2000u);
  EXPECT_THROW(parse_metric("manhattan"), std::invalid_argument);
  EXPECT_THROW(quality_predicate("fancy"), std::invalid_argument);
  auto bad = tiny_config();
  bad.window_s = 25.0;
  EXPECT_THROW(validate(bad), std::invalid_argument);
}

}  // namespace
}  // namespace plita::train
