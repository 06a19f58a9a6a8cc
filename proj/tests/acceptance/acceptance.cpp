// Acceptance run: one PASS/FAIL line per criterion.
//   plita_acceptance [--work DIR] [--only 1,2,...] [--ablate-iterations K]

#include <malloc.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "plita/cli/commands.hpp"
#include "plita/data/synthetic.hpp"
#include "plita/losses/losses.hpp"
#include "plita/model/checkpoint.hpp"
#include "plita/signal/prep.hpp"
#include "plita/train/trainer.hpp"
#include "support/loss_oracle.hpp"

namespace {

namespace fs = std::filesystem;
namespace oracle = plita::testing::oracle;
using namespace plita;
using core::Tensor;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

oracle::Rows random_rows(std::size_t n, std::size_t d, core::Rng& rng) {
  oracle::Rows r(n, std::vector<double>(d));
  for (auto& row : r) {
    for (auto& v : row) v = core::uniform(rng, -1.0, 1.0);
  }
  return r;
}

Tensor<double> as_tensor(const oracle::Rows& rows, bool batched) {
  const std::size_t n = rows.size(), d = rows[0].size();
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return batched ? Tensor<double>({1, n, d}, flat) : Tensor<double>({n, d}, flat);
}

double matrix_error(const Tensor<double>& t, const oracle::Matrix& m) {
  double worst = 0.0;
  const std::size_t n = m.size(), c = m[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) worst = std::max(worst, std::abs(t.data()[i * c + j] - m[i][j]));
  }
  return worst;
}

Outcome loss_oracles() {
  const auto t0 = Clock::now();
  core::Rng rng = core::keyed_rng({2024, 1});
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + core::uniform_index(rng, 5);
    const std::size_t d = 2 + core::uniform_index(rng, 15);
    const auto z1 = random_rows(n, d, rng), q1 = random_rows(n, d, rng);
    const auto z2 = random_rows(n, d, rng), q2 = random_rows(n, d, rng);
    const auto Z1 = as_tensor(z1, false), Q1 = as_tensor(q1, false), Q2 = as_tensor(q2, false);
    worst = std::max(worst, matrix_error(losses::cosine_distance_matrix(Z1, Q2), oracle::cosine(z1, q2)));
    worst = std::max(worst, matrix_error(losses::euclidean_distance_matrix(Z1, Q2), oracle::euclidean(z1, q2)));
    worst = std::max(worst, matrix_error(losses::IdealTvMatrix(n).values<double>(), oracle::ideal(n)));
    worst = std::max(worst, matrix_error(losses::rescale_tv(losses::cosine_distance_matrix(Z1, Q1)),
                                         oracle::rescale(oracle::cosine(z1, q1))));
    worst = std::max(worst, matrix_error(losses::rescale_tv(losses::euclidean_distance_matrix(Z1, Q1)),
                                         oracle::rescale(oracle::euclidean(z1, q1))));
    const auto bz1 = as_tensor(z1, true), bq1 = as_tensor(q1, true);
    const auto bz2 = as_tensor(z2, true), bq2 = as_tensor(q2, true);
    for (auto metric : {losses::Metric::Cosine, losses::Metric::Euclidean}) {
      const bool cos = metric == losses::Metric::Cosine;
      worst = std::max(worst, std::abs(losses::loss_iv(bz1, bq2, bz2, bq1, metric).item() -
                                       oracle::loss_iv(z1, q2, z2, q1, cos)));
      worst = std::max(worst, std::abs(losses::loss_tv(bz1, bq1, bz2, bq2, metric).item() -
                                       oracle::loss_tv(z1, q1, z2, q2, cos)));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-6 && elapsed < 10.0,
          "200 instances, max |error| " + fmt("%.2e", worst) + " (atol 1e-6), " + fmt("%.2f", elapsed) + " s"};
}

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

Outcome gradient_check() {
  const auto t0 = Clock::now();
  model::ModelPair<double> pair(tiny_model(), 3);
  core::Rng rng = core::keyed_rng({17, 2});
  const std::size_t b = 2, n = 3;
  auto random = [&](core::Shape s) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.mutable_data()) v = core::uniform(rng, -1.0, 1.0);
    return t;
  };
  const auto x1 = random({b * n, 1000}), x2 = random({b * n, 1000});
  for (auto& p : pair.teacher_parameters()) {
    for (auto& v : p.tensor.mutable_data()) v += 0.05 * core::normal(rng);
  }
  const double h = 1e-7, rtol = 1e-3, atol = 1e-6;
  std::size_t checked = 0, failed = 0;
  double worst = 0.0;
  for (auto metric : {losses::Metric::Cosine, losses::Metric::Euclidean}) {
    auto params = pair.student_parameters();
    for (auto& p : params) p.tensor.zero_grad();
    train::compute_losses(pair, x1, x2, b, n, metric, true, true).total.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    core::NoGradGuard guard;
    auto loss = [&] { return train::compute_losses(pair, x1, x2, b, n, metric, true, true).total.item(); };
    for (std::size_t l = 0; l < params.size(); ++l) {
      auto values = params[l].tensor.mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double fp = loss();
        values[i] = saved - h;
        const double fm = loss();
        values[i] = saved;
        const double numeric = (fp - fm) / (2 * h);
        const double ratio = std::abs(numeric - analytic[l][i]) / (atol + rtol * std::abs(numeric));
        worst = std::max(worst, ratio);
        failed += ratio > 1.0;
        ++checked;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {failed == 0 && elapsed < 60.0,
          std::to_string(checked) + " student gradients (cosine + euclidean), " + std::to_string(failed) +
              " outside rtol 1e-3 (atol 1e-6), worst err/tol " + fmt("%.3f", worst) + ", " + fmt("%.1f", elapsed) +
              " s"};
}

Outcome ideal_matrix() {
  const std::size_t expected[4][4] = {{0, 1, 2, 3}, {1, 0, 1, 2}, {2, 1, 0, 1}, {3, 2, 1, 0}};
  const losses::IdealTvMatrix m(4);
  const auto values = m.values<double>();
  bool ok = m.denominator() == 3;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      ok = ok && m.numerator(i, j) == expected[i][j] &&
           values.data()[i * 4 + j] == static_cast<double>(expected[i][j]) / 3.0;
    }
  }
  return {ok, "numerators |i-j| over denominator 3, values equal k/3 bit for bit"};
}

Outcome ema_contract() {
  data::SyntheticConfig sc;
  sc.subjects = 3;
  sc.duration_s = 120.0;
  sc.fs = 100.0;
  const auto corpus = data::prefilter_corpus(data::generate_synthetic(sc, 11).records);
  train::TrainConfig cfg;
  cfg.model = tiny_model();
  cfg.batch = 2;
  cfg.n = 3;
  cfg.window_s = 40.0;
  cfg.iterations = 10;
  train::Trainer trainer(cfg, corpus);
  bool teacher_zero = true;
  for (int step = 0; step < 10; ++step) {
    trainer.step();
    for (const auto& p : trainer.pair().teacher_parameters()) {
      for (float g : p.tensor.grad()) teacher_zero = teacher_zero && g == 0.0f;
    }
  }

  model::ModelPair<float> pair(tiny_model(), 1);
  for (auto& p : pair.student_parameters()) {
    for (auto& v : p.tensor.mutable_data()) v += 0.05f;
  }
  const double g0 = pair.ema_gap();
  double worst = 0.0;
  for (int k = 1; k <= 100; ++k) {
    pair.ema_update();
    const double expected = std::pow(0.995, k);
    worst = std::max(worst, std::abs(pair.ema_gap() / g0 - expected) / expected);
  }
  return {teacher_zero && g0 > 0.0 && worst <= 1e-5,
          std::string("teacher grads zero over 10 steps: ") + (teacher_zero ? "yes" : "no") +
              "; frozen-student gap vs 0.995^k over 100 steps, max rel error " + fmt("%.2e", worst)};
}

std::vector<double> sinusoid(double f, double fs, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * M_PI * f * static_cast<double>(i) / fs);
  return x;
}

double tone_amplitude(const std::vector<double>& y, double f, double fs, std::size_t begin, std::size_t end) {
  double c = 0.0, s = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double ph = 2.0 * M_PI * f * static_cast<double>(i) / fs;
    c += y[i] * std::cos(ph);
    s += y[i] * std::sin(ph);
  }
  return 2.0 * std::hypot(c, s) / static_cast<double>(end - begin);
}

Outcome preprocessing() {
  double dc = 0.0;
  const auto hp = signal::highpass_butterworth({std::vector<double>(3000, 1.0), 100.0}).samples;
  for (std::size_t i = 500; i + 500 < hp.size(); ++i) dc = std::max(dc, std::abs(hp[i]));
  const auto chain = signal::prefilter({std::vector<double>(7500, 1.0), 250.0}).samples;
  for (std::size_t i = 500; i + 500 < chain.size(); ++i) dc = std::max(dc, std::abs(chain[i]));

  const auto sos = signal::butterworth_highpass(5, 0.5, 100.0);
  const double design_db = 20.0 * std::log10(signal::magnitude_response(sos, 0.5, 100.0));
  const std::size_t n = 60000;
  const auto y = signal::sos_filter(sos, sinusoid(0.5, 100.0, n));
  const double measured_db = 20.0 * std::log10(tone_amplitude(y, 0.5, 100.0, n / 2, n));
  const double target = -3.0103;

  double resample_err = 0.0;
  for (const auto& [fs_in, f] : std::vector<std::pair<double, double>>{
           {250.0, 5.0}, {360.0, 10.0}, {500.0, 20.0}, {128.0, 7.0}, {1000.0, 1.0}}) {
    const auto out = signal::resample({sinusoid(f, fs_in, static_cast<std::size_t>(fs_in * 20)), fs_in}).samples;
    const auto ref = sinusoid(f, 100.0, out.size());
    for (std::size_t i = 200; i + 200 < out.size(); ++i) resample_err = std::max(resample_err, std::abs(out[i] - ref[i]));
  }
  const bool ok = dc < 1e-3 && std::abs(design_db - target) <= 0.3 && std::abs(measured_db - target) <= 0.3 &&
                  resample_err < 1e-3;
  return {ok, "DC residual " + fmt("%.1e", dc) + "; gain at 0.5 Hz " + fmt("%.3f", design_db) + " dB design, " +
                  fmt("%.3f", measured_db) + " dB measured; resampler sinusoid error " + fmt("%.1e", resample_err)};
}

Outcome selection_rule() {
  auto record = [](const std::string& id, std::size_t n, std::size_t modal) {
    data::Recording r;
    r.subject_id = id;
    r.record_id = "r1";
    r.samples.assign(10, 0.0f);
    std::vector<int> labels(n, 1);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(modal), 0);
    r.labels = labels;
    return r;
  };
  const data::Corpus records = {record("k_8_of_10", 10, 8), record("k_800_of_1000", 1000, 800),
                                record("k_4_of_5", 5, 4),    record("d_801_of_1000", 1000, 801),
                                record("d_9_of_10", 10, 9),  record("d_all", 7, 7)};
  std::set<std::string> kept;
  for (const auto& r : data::select_dynamic_records(records, 0.8)) kept.insert(r.subject_id);
  const std::set<std::string> expected = {"k_8_of_10", "k_800_of_1000", "k_4_of_5"};
  return {kept == expected, "kept " + std::to_string(kept.size()) + " of 6; 0.800 kept, 0.801 dropped: " +
                                (kept.count("k_800_of_1000") && !kept.count("d_801_of_1000") ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// Desk-profile runs through the command line.

class Desk {
 public:
  Desk(fs::path work, std::size_t ablate_iterations) : work_(std::move(work)), ablate_iterations_(ablate_iterations) {}

  fs::path corpus() {
    if (!corpus_) {
      cli({"gen", "--seed", "0", "--out", (work_ / "corpus").string()});
      corpus_ = work_ / "corpus";
    }
    return *corpus_;
  }

  fs::path train(const std::string& name, std::vector<std::string> extra) {
    if (!runs_.count(name)) {
      std::vector<std::string> args = {"train", "--corpus", corpus().string(), "--profile", "desk", "--seed", "0",
                                       "--log-every", "250", "--out", (work_ / name).string()};
      args.insert(args.end(), extra.begin(), extra.end());
      const auto t0 = Clock::now();
      cli(args);
      train_seconds_[name] = seconds_since(t0);
      runs_.insert(name);
    }
    return work_ / name;
  }

  fs::path full() { return train("full_a", {}); }
  fs::path full_again() { return train("full_b", {}); }
  fs::path no_tv() { return train("no_tv", {"--enable-tv", "false"}); }
  double train_seconds(const std::string& name) const { return train_seconds_.at(name); }

  json eval(const fs::path& run, const std::string& name, std::vector<std::string> extra) {
    if (!reports_.count(name)) {
      std::vector<std::string> args = {"eval", "--checkpoint", run.string(), "--corpus", corpus().string(),
                                       "--out", (work_ / "eval" / name).string()};
      args.insert(args.end(), extra.begin(), extra.end());
      const auto t0 = Clock::now();
      cli(args);
      eval_seconds_ += seconds_since(t0);
      std::ifstream in(work_ / "eval" / name / "report.json");
      reports_[name] = json::parse(in);
    }
    return reports_[name];
  }
  double eval_seconds() const { return eval_seconds_; }

  fs::path ablate() {
    const auto out = work_ / "ablate";
    if (!fs::exists(out / "table.csv")) {
      cli({"ablate", "--corpus", corpus().string(), "--profile", "desk", "--seed", "0", "--iterations",
           std::to_string(ablate_iterations_), "--log-every", "100", "--out", out.string()});
    }
    return out / "table.csv";
  }
  std::size_t ablate_iterations() const { return ablate_iterations_; }

 private:
  void cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"plita"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::cerr << "$ plita";
    for (const auto& a : args) std::cerr << ' ' << a;
    std::cerr << '\n';
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), std::cerr, std::cerr);
    if (code != 0) throw std::runtime_error("plita " + args[0] + " exited with " + std::to_string(code));
  }

  fs::path work_;
  std::size_t ablate_iterations_;
  std::optional<fs::path> corpus_;
  std::set<std::string> runs_;
  std::map<std::string, double> train_seconds_;
  std::map<std::string, json> reports_;
  double eval_seconds_ = 0.0;
};

double probe_accuracy(const json& report) { return report.at("report").at("aggregate").at("accuracy").get<double>(); }

Outcome tempo_variant_effect(Desk& desk) {
  const auto full = desk.full(), no_tv = desk.no_tv();
  const double state_full = probe_accuracy(desk.eval(full, "full_state", {"--task", "probe", "--label", "state"}));
  const double state_no_tv = probe_accuracy(desk.eval(no_tv, "no_tv_state", {"--task", "probe", "--label", "state"}));
  const double attr_full =
      probe_accuracy(desk.eval(full, "full_attribute", {"--task", "probe", "--label", "attribute"}));
  const double attr_no_tv =
      probe_accuracy(desk.eval(no_tv, "no_tv_attribute", {"--task", "probe", "--label", "attribute"}));
  const double gain = 100.0 * (state_full - state_no_tv), loss = 100.0 * (attr_no_tv - attr_full);
  const double minutes = (desk.train_seconds("full_a") + desk.train_seconds("no_tv")) / 60.0;
  return {gain >= 5.0 && loss < 3.0,
          "state probe " + fmt("%.1f", 100 * state_full) + "% vs " + fmt("%.1f", 100 * state_no_tv) +
              "% without L_tv (gain " + fmt("%+.1f", gain) + " pts, need >= 5); attribute probe " +
              fmt("%.1f", 100 * attr_full) + "% vs " + fmt("%.1f", 100 * attr_no_tv) + "% (drop " +
              fmt("%+.1f", loss) + " pts, need < 3); training " + fmt("%.1f", minutes) + " min for both arms"};
}

Outcome disentangling(Desk& desk) {
  const auto report = desk.eval(desk.full(), "full_disentangle", {"--task", "disentangle"});
  const auto& d = report.at("disentangle");
  const double baseline = d.at("baseline").at("mean_ratio").get<double>();
  const double inv = d.at("top_min_invariant").get<double>(), tv = d.at("top_min_tempo_variant").get<double>();
  const double null_top = d.at("baseline").at("top_min_mean").get<double>();
  const std::size_t records = d.at("clusters").at("records").size();
  return {inv >= baseline + 0.10 && tv >= baseline + 0.10,
          std::to_string(records) + " selected records; top-20 minimum ratio invariant " + fmt("%.3f", inv) +
              ", tempo-variant " + fmt("%.3f", tv) + " vs random baseline " + fmt("%.3f", baseline) +
              " + 0.10 (null top-20 minimum " + fmt("%.3f", null_top) + ")"};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> rows_without_time(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(line.substr(0, line.rfind(',')));
  return rows;
}

Outcome determinism(Desk& desk) {
  const auto a = desk.full(), b = desk.full_again();
  const auto ca = read_file(a / "checkpoint.bin"), cb = read_file(b / "checkpoint.bin");
  const auto ma = rows_without_time(a / "metrics.csv"), mb = rows_without_time(b / "metrics.csv");
  const bool same_ckpt = !ca.empty() && ca == cb;
  const bool same_metrics = ma.size() > 1 && ma == mb;
  return {same_ckpt && same_metrics, "checkpoints (" + std::to_string(ca.size()) + " bytes) identical: " +
                                         (same_ckpt ? "yes" : "no") + "; metrics.csv identical apart from the ms column (" +
                                         std::to_string(ma.size() - 1) + " rows): " + (same_metrics ? "yes" : "no")};
}

Outcome ablation(Desk& desk, const fs::path& baseline) {
  const auto table = desk.ablate();
  std::ifstream in(table);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> rows;
  bool values_ok = true;
  std::vector<std::pair<std::size_t, double>> cells;
  for (std::string line; std::getline(in, line);) {
    rows.push_back(line);
    std::stringstream ss(line);
    std::vector<std::string> cols;
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    values_ok = values_ok && cols.size() == 5;
    if (cols.size() != 5) continue;
    cells.emplace_back(std::stoul(cols[0]), std::stod(cols[1]));
    for (int k = 2; k < 5; ++k) {
      const double v = std::stod(cols[k]);
      values_ok = values_ok && std::isfinite(v) && v >= 0.0 && v <= 1.0;
    }
  }
  const std::vector<std::pair<std::size_t, double>> expected = {{3, 120}, {4, 120}, {5, 120}, {4, 90}, {4, 150}};
  const bool ok = header == cli::kAblationHeader && cells == expected && values_ok;
  std::string drift = "no stored baseline";
  if (fs::exists(baseline)) {
    std::ifstream b(baseline);
    std::string bh;
    std::getline(b, bh);
    std::vector<std::string> brows;
    for (std::string line; std::getline(b, line);) brows.push_back(line);
    drift = brows == rows ? "matches stored baseline" : "differs from stored baseline " + baseline.filename().string();
  }
  return {ok, "5 rows (N, W) = (3,120) (4,120) (5,120) (4,90) (4,150) with columns " + header + " at " +
                  std::to_string(desk.ablate_iterations()) + " iterations per cell; " + drift + "; table at " +
                  table.string()};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);

  CLI::App app{"acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "plita_acceptance";
  fs::path baseline;
  std::vector<int> only;
  std::size_t ablate_iterations = 200;
  app.add_option("--work", work, "scratch directory (emptied first)");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--ablate-iterations", ablate_iterations, "training iterations per ablation cell");
  app.add_option("--ablation-baseline", baseline, "stored ablation table to compare against");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  Desk desk(work, ablate_iterations);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, loss_oracles},
      {2, gradient_check},
      {3, ideal_matrix},
      {4, ema_contract},
      {5, preprocessing},
      {6, [&] { return tempo_variant_effect(desk); }},
      {7, [&] { return disentangling(desk); }},
      {8, [&] { return determinism(desk); }},
      {9, selection_rule},
      {10, [&] { return ablation(desk, baseline); }},
  };
  std::vector<std::string> lines;
  bool all = true;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    char head[64];
    std::snprintf(head, sizeof head, "criterion %2d: %s", id, o.pass ? "PASS" : "FAIL");
    lines.push_back(std::string(head) + "  " + o.detail + "  [" + fmt("%.1f", seconds_since(t0)) + " s]");
    std::cout << lines.back() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::ofstream(work / "acceptance.txt") << [&] {
    std::string s;
    for (const auto& l : lines) s += l + '\n';
    return s;
  }();
  return all ? 0 : 1;
}
