#include "plita/eval/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "plita/core/adam.hpp"
#include "plita/core/ops.hpp"
#include "plita/core/rng.hpp"
#include "plita/data/recording.hpp"
#include "plita/model/layers.hpp"

namespace plita::eval {

using core::Tensor;

namespace {

constexpr std::uint64_t kHeadStream = 0x677275ULL;

std::vector<SequenceGroup> groups_within(const std::vector<SequenceGroup>& all, const std::vector<std::size_t>& rows,
                                         std::size_t table_size) {
  std::vector<char> member(table_size, 0);
  for (std::size_t r : rows) member[r] = 1;
  std::vector<SequenceGroup> out;
  for (const auto& g : all) {
    if (std::all_of(g.rows.begin(), g.rows.end(), [&](std::size_t r) { return member[r]; })) out.push_back(g);
  }
  return out;
}

// [groups, size, d] with features standardized by (mean, inv_std).
Tensor<float> stack(const EmbeddingTable& table, const std::vector<SequenceGroup>& groups, std::span<const std::size_t> pick,
                    const std::vector<double>& mean, const std::vector<double>& inv_std) {
  const std::size_t d = table.dim, len = groups.front().rows.size();
  std::vector<float> x;
  x.reserve(pick.size() * len * d);
  for (std::size_t g : pick) {
    for (std::size_t r : groups[g].rows) {
      const auto h = table.row(r);
      for (std::size_t j = 0; j < d; ++j) x.push_back(static_cast<float>((h[j] - mean[j]) * inv_std[j]));
    }
  }
  return Tensor<float>({pick.size(), len, d}, std::move(x));
}

}  // namespace

std::vector<SequenceGroup> make_groups(const EmbeddingTable& table, LabelField field, std::size_t size) {
  if (size == 0) throw std::invalid_argument("group size must be positive");
  std::vector<SequenceGroup> out;
  for (const auto& key : table.record_keys()) {
    std::map<std::size_t, std::size_t> by_strip;
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (table.rows[r].record_key() == key) by_strip[table.rows[r].strip_index] = r;
    }
    if (by_strip.empty()) continue;
    const std::size_t last = by_strip.rbegin()->first;
    for (std::size_t start = 0; start + size <= last + 1; start += size) {
      SequenceGroup g;
      std::vector<int> labels;
      for (std::size_t s = start; s < start + size; ++s) {
        const auto it = by_strip.find(s);
        if (it == by_strip.end()) break;
        const auto l = label_of(table.rows[it->second], field);
        if (!l) break;
        g.rows.push_back(it->second);
        labels.push_back(*l);
      }
      if (g.rows.size() != size) continue;
      g.label = data::majority_label(labels, 0, labels.size());
      out.push_back(std::move(g));
    }
  }
  return out;
}

FoldProbe sequence_fold_probe(LabelField field, const SequenceProbeConfig& cfg) {
  return [field, cfg](const EmbeddingTable& table, const Fold& fold,
                      std::string& warning) -> std::optional<ClassificationMetrics> {
    const auto all = make_groups(table, field, cfg.group);
    const auto train = groups_within(all, fold.train, table.size());
    const auto test = groups_within(all, fold.test, table.size());
    if (test.empty()) {
      warning = "held-out rows form no complete group; fold skipped";
      return std::nullopt;
    }
    std::set<int> class_set;
    for (const auto& g : train) class_set.insert(g.label);
    if (class_set.size() < 2) {
      warning = "training groups hold a single class; fold skipped";
      return std::nullopt;
    }
    const std::vector<int> classes(class_set.begin(), class_set.end());
    std::map<int, std::size_t> class_index;
    for (std::size_t i = 0; i < classes.size(); ++i) class_index[classes[i]] = i;

    const std::size_t d = table.dim;
    std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
    std::size_t count = 0;
    for (const auto& g : train) {
      for (std::size_t r : g.rows) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += table.at(r, j);
        ++count;
      }
    }
    for (auto& m : mean) m /= static_cast<double>(count);
    for (const auto& g : train) {
      for (std::size_t r : g.rows) {
        for (std::size_t j = 0; j < d; ++j) inv_std[j] += (table.at(r, j) - mean[j]) * (table.at(r, j) - mean[j]);
      }
    }
    for (auto& v : inv_std) {
      v /= static_cast<double>(count);
      v = v < 1e-12 ? 0.0 : 1.0 / std::sqrt(v);
    }

    core::Rng init = core::keyed_rng({cfg.seed, kHeadStream});
    model::GruHead<float> head(d, classes.size(), init, cfg.hidden);
    auto params = head.parameters();
    core::Adam<float> adam({.lr = cfg.lr, .weight_decay = 0.0});
    std::vector<std::size_t> order(train.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      core::Rng rng = core::keyed_rng({cfg.seed, kHeadStream, epoch});
      core::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
        const std::span<const std::size_t> pick(order.data() + start, std::min(cfg.batch, order.size() - start));
        Tensor<float> onehot({pick.size(), classes.size()});
        for (std::size_t i = 0; i < pick.size(); ++i) {
          onehot.mutable_data()[i * classes.size() + class_index.at(train[pick[i]].label)] = 1.0f;
        }
        for (auto& p : params) p.tensor.zero_grad();
        const auto logits = head(stack(table, train, pick, mean, inv_std));
        const auto loss = core::neg(core::mean_all(core::sum(core::mul(core::log_softmax(logits), onehot), 1)));
        loss.backward();
        adam.step(params);
      }
    }

    core::NoGradGuard guard;
    std::vector<std::size_t> all_test(test.size());
    std::iota(all_test.begin(), all_test.end(), 0);
    const auto logits = head(stack(table, test, all_test, mean, inv_std));
    std::vector<double> scores(logits.data().begin(), logits.data().end());
    std::vector<int> truth;
    for (const auto& g : test) truth.push_back(g.label);
    return evaluate_scores(truth, scores, classes);
  };
}

ProbeReport sequence_probe(const EmbeddingTable& table, LabelField field, const SequenceProbeConfig& cfg) {
  if (!has_labels(table, field)) throw std::invalid_argument("table has no " + to_string(field) + " labels");
  std::set<int> classes;
  for (const auto& g : make_groups(table, field, cfg.group)) classes.insert(g.label);
  ProbeReport report;
  if (classes.size() == 1) {
    const int only = *classes.begin();
    const std::size_t size = cfg.group;
    report = leave_one_out(table, [field, only, size](const EmbeddingTable& t, const Fold& fold,
                                                      std::string& warning) -> std::optional<ClassificationMetrics> {
      const auto test = groups_within(make_groups(t, field, size), fold.test, t.size());
      if (test.empty()) {
        warning = "held-out rows form no complete group; fold skipped";
        return std::nullopt;
      }
      std::vector<int> truth, predicted(test.size(), only);
      for (const auto& g : test) truth.push_back(g.label);
      ClassificationMetrics m;
      m.n = test.size();
      m.accuracy = accuracy(truth, predicted);
      m.macro_f1 = macro_f1(truth, predicted);
      return m;
    });
    report.degenerate = true;
  } else {
    report = leave_one_out(table, sequence_fold_probe(field, cfg));
  }
  report.task = "sequence_probe";
  report.label = to_string(field);
  return report;
}

}  // namespace plita::eval
