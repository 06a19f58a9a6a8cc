#include "plita/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "plita/core/rng.hpp"

namespace plita::eval {

using nlohmann::json;

LabelField parse_label_field(const std::string& name) {
  if (name == "state") return LabelField::State;
  if (name == "attribute") return LabelField::Attribute;
  throw std::invalid_argument("unknown label field '" + name + "' (state|attribute)");
}

std::string to_string(LabelField field) { return field == LabelField::State ? "state" : "attribute"; }

std::optional<int> label_of(const EmbeddingRow& row, LabelField field) {
  return field == LabelField::State ? row.label : row.attribute;
}

bool has_labels(const EmbeddingTable& table, LabelField field) {
  return std::any_of(table.rows.begin(), table.rows.end(), [&](const auto& r) { return label_of(r, field).has_value(); });
}

Features gather(const EmbeddingTable& table, std::span<const std::size_t> rows) {
  Features f;
  f.n = rows.size();
  f.d = table.dim;
  f.x.reserve(f.n * f.d);
  for (std::size_t r : rows) {
    const auto h = table.row(r);
    f.x.insert(f.x.end(), h.begin(), h.end());
  }
  return f;
}

// ---------------------------------------------------------------------------
// LinearProbe

void LinearProbe::fit(const Features& x, std::span<const int> y, const LinearProbeConfig& cfg) {
  if (x.n != y.size()) throw std::invalid_argument("probe: feature rows and labels differ in length");
  classes_.assign(y.begin(), y.end());
  std::sort(classes_.begin(), classes_.end());
  classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
  if (classes_.size() < 2) throw std::invalid_argument("probe: need at least two classes to fit");
  d_ = x.d;
  const std::size_t n = x.n;

  mean_.assign(d_, 0.0);
  inv_std_.assign(d_, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_; ++j) mean_[j] += x.x[i * d_ + j];
  }
  for (auto& m : mean_) m /= static_cast<double>(n);
  std::vector<double> var(d_, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_; ++j) {
      const double c = x.x[i * d_ + j] - mean_[j];
      var[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < d_; ++j) {
    const double v = var[j] / static_cast<double>(n);
    inv_std_[j] = v < 1e-12 ? 0.0 : 1.0 / std::sqrt(v);
  }
  std::vector<double> z(n * d_);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_; ++j) z[i * d_ + j] = (x.x[i * d_ + j] - mean_[j]) * inv_std_[j];
  }

  const std::size_t m = classes_.size() == 2 ? 1 : classes_.size();
  w_.assign(m, std::vector<double>(d_ + 1, 0.0));
  std::vector<std::size_t> order(n);
  const double shrink = 1.0 - cfg.lr * cfg.lambda;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    core::Rng rng = core::keyed_rng({cfg.seed, epoch});
    core::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      const double* zi = z.data() + i * d_;
      for (std::size_t c = 0; c < m; ++c) {
        const int positive = m == 1 ? classes_[1] : classes_[c];
        const double target = y[i] == positive ? 1.0 : -1.0;
        auto& w = w_[c];
        double s = w[d_];
        for (std::size_t j = 0; j < d_; ++j) s += w[j] * zi[j];
        for (std::size_t j = 0; j < d_; ++j) w[j] *= shrink;
        if (target * s < 1.0) {
          for (std::size_t j = 0; j < d_; ++j) w[j] += cfg.lr * target * zi[j];
          w[d_] += cfg.lr * target;
        }
      }
    }
  }
}

std::vector<double> LinearProbe::decision(const Features& x) const {
  if (w_.empty()) throw std::logic_error("probe: decision before fit");
  if (x.d != d_) throw std::invalid_argument("probe: feature width differs from training");
  const std::size_t k = classes_.size();
  std::vector<double> out(x.n * k);
  std::vector<double> z(d_);
  for (std::size_t i = 0; i < x.n; ++i) {
    for (std::size_t j = 0; j < d_; ++j) z[j] = (x.x[i * d_ + j] - mean_[j]) * inv_std_[j];
    for (std::size_t c = 0; c < w_.size(); ++c) {
      double s = w_[c][d_];
      for (std::size_t j = 0; j < d_; ++j) s += w_[c][j] * z[j];
      if (w_.size() == 1) {
        out[i * k] = -s;
        out[i * k + 1] = s;
      } else {
        out[i * k + c] = s;
      }
    }
  }
  return out;
}

std::vector<int> LinearProbe::predict(const Features& x) const {
  const auto scores = decision(x);
  const std::size_t k = classes_.size();
  std::vector<int> out(x.n);
  for (std::size_t i = 0; i < x.n; ++i) {
    const auto* row = scores.data() + i * k;
    out[i] = classes_[static_cast<std::size_t>(std::max_element(row, row + k) - row)];
  }
  return out;
}

ClassificationMetrics LinearProbe::evaluate(const Features& x, std::span<const int> y) const {
  return evaluate_scores(y, decision(x), classes_);
}

// ---------------------------------------------------------------------------
// Folds

std::vector<Fold> subject_folds(const EmbeddingTable& table, std::size_t k) {
  const auto subjects = table.subject_ids();
  if (subjects.size() < 2) throw std::invalid_argument("subject-disjoint folds need at least two subjects");
  if (k < 2) throw std::invalid_argument("need at least two folds");
  k = std::min(k, subjects.size());
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < subjects.size(); ++i) fold_of[subjects[i]] = i % k;
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < subjects.size(); ++i) folds[i % k].held_out.push_back(subjects[i]);
  for (std::size_t r = 0; r < table.size(); ++r) {
    const std::size_t f = fold_of.at(table.rows[r].subject_id);
    for (std::size_t g = 0; g < k; ++g) (g == f ? folds[g].test : folds[g].train).push_back(r);
  }
  return folds;
}

std::vector<Fold> leave_one_record_out(const EmbeddingTable& table) {
  const auto keys = table.record_keys();
  if (keys.size() < 2) throw std::invalid_argument("leave-one-out needs at least two records");
  std::vector<Fold> folds;
  for (const auto& key : keys) {
    Fold f;
    f.held_out = {key};
    std::string subject;
    for (const auto& row : table.rows) {
      if (row.record_key() == key) {
        subject = row.subject_id;
        break;
      }
    }
    for (std::size_t r = 0; r < table.size(); ++r) {
      const auto& row = table.rows[r];
      if (row.record_key() == key) {
        f.test.push_back(r);
      } else if (row.subject_id != subject) {
        f.train.push_back(r);
      }
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

FoldAudit audit_folds(const EmbeddingTable& table, const std::vector<Fold>& folds) {
  FoldAudit a;
  std::vector<std::size_t> seen(table.size(), 0);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    std::set<std::string> test_subjects;
    for (std::size_t r : folds[i].test) {
      ++seen.at(r);
      test_subjects.insert(table.rows[r].subject_id);
    }
    for (std::size_t r : folds[i].train) {
      if (test_subjects.count(table.rows[r].subject_id)) {
        a.subject_disjoint = false;
        a.detail += "fold " + std::to_string(i) + " trains on held-out subject " + table.rows[r].subject_id + "; ";
        break;
      }
    }
  }
  for (std::size_t r = 0; r < seen.size(); ++r) {
    if (seen[r] == 0) a.covers_all = false;
    if (seen[r] > 1) a.disjoint = false;
  }
  if (!a.covers_all) a.detail += "some rows are never held out; ";
  if (!a.disjoint) a.detail += "some rows are held out more than once; ";
  return a;
}

ProbeReport run_folds(const EmbeddingTable& table, const std::vector<Fold>& folds, const FoldProbe& probe) {
  ProbeReport report;
  report.audit = audit_folds(table, folds);
  double acc = 0, f1 = 0, auc = 0;
  std::size_t auc_folds = 0;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    FoldResult fr;
    fr.index = i;
    fr.held_out = folds[i].held_out;
    fr.metrics = probe(table, folds[i], fr.warning);
    if (fr.metrics) {
      ++report.evaluated;
      acc += fr.metrics->accuracy;
      f1 += fr.metrics->macro_f1;
      report.aggregate.n += fr.metrics->n;
      if (!std::isnan(fr.metrics->auc)) {
        auc += fr.metrics->auc;
        ++auc_folds;
      }
    }
    report.folds.push_back(std::move(fr));
  }
  if (report.evaluated) {
    report.aggregate.accuracy = acc / static_cast<double>(report.evaluated);
    report.aggregate.macro_f1 = f1 / static_cast<double>(report.evaluated);
  }
  if (auc_folds) report.aggregate.auc = auc / static_cast<double>(auc_folds);
  return report;
}

ProbeReport leave_one_out(const EmbeddingTable& table, const FoldProbe& probe) {
  return run_folds(table, leave_one_record_out(table), probe);
}

namespace {

struct Labeled {
  std::vector<std::size_t> rows;
  std::vector<int> y;
};

Labeled labeled_rows(const EmbeddingTable& table, std::span<const std::size_t> rows, LabelField field) {
  Labeled out;
  for (std::size_t r : rows) {
    if (const auto l = label_of(table.rows[r], field)) {
      out.rows.push_back(r);
      out.y.push_back(*l);
    }
  }
  return out;
}

bool single_class(const EmbeddingTable& table, LabelField field) {
  std::set<int> classes;
  for (const auto& r : table.rows) {
    if (const auto l = label_of(r, field)) classes.insert(*l);
  }
  return classes.size() < 2;
}

}  // namespace

FoldProbe linear_fold_probe(LabelField field, const LinearProbeConfig& cfg) {
  return [field, cfg](const EmbeddingTable& table, const Fold& fold,
                      std::string& warning) -> std::optional<ClassificationMetrics> {
    const auto train = labeled_rows(table, fold.train, field);
    const auto test = labeled_rows(table, fold.test, field);
    if (std::set<int>(train.y.begin(), train.y.end()).size() < 2) {
      warning = "training rows hold a single class; fold skipped";
      return std::nullopt;
    }
    if (test.rows.empty()) {
      warning = "no labeled held-out rows; fold skipped";
      return std::nullopt;
    }
    LinearProbe probe;
    probe.fit(gather(table, train.rows), train.y, cfg);
    return probe.evaluate(gather(table, test.rows), test.y);
  };
}

ProbeReport linear_probe(const EmbeddingTable& table, LabelField field, std::size_t folds,
                         const LinearProbeConfig& cfg) {
  if (!has_labels(table, field)) throw std::invalid_argument("table has no " + to_string(field) + " labels");
  auto report = run_folds(table, subject_folds(table, folds), linear_fold_probe(field, cfg));
  report.task = "linear_probe";
  report.label = to_string(field);
  report.degenerate = single_class(table, field);
  return report;
}

void to_json(json& j, const FoldAudit& a) {
  j = json{{"covers_all", a.covers_all}, {"disjoint", a.disjoint}, {"subject_disjoint", a.subject_disjoint},
           {"detail", a.detail}, {"ok", a.ok()}};
}

void to_json(json& j, const ProbeReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds) {
    json jf{{"index", f.index}, {"held_out", f.held_out}};
    jf["metrics"] = f.metrics ? json(*f.metrics) : json(nullptr);
    if (!f.warning.empty()) jf["warning"] = f.warning;
    folds.push_back(std::move(jf));
  }
  j = json{{"task", r.task},          {"label", r.label},           {"folds", folds},
           {"aggregate", r.aggregate}, {"evaluated", r.evaluated}, {"degenerate", r.degenerate},
           {"audit", r.audit}};
}

}  // namespace plita::eval
