#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plita/eval/embeddings.hpp"
#include "plita/eval/metrics.hpp"

namespace plita::eval {

/// Which row field a probe predicts: the per-strip state label or the subject attribute.
enum class LabelField { State, Attribute };

LabelField parse_label_field(const std::string& name);
std::string to_string(LabelField field);
std::optional<int> label_of(const EmbeddingRow& row, LabelField field);
bool has_labels(const EmbeddingTable& table, LabelField field);

/// Dense row-major matrix gathered from table rows.
struct Features {
  std::size_t n = 0, d = 0;
  std::vector<float> x;

  std::span<const float> row(std::size_t i) const { return {x.data() + i * d, d}; }
};

Features gather(const EmbeddingTable& table, std::span<const std::size_t> rows);

struct LinearProbeConfig {
  double lambda = 1e-3;
  std::size_t epochs = 200;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

/// Maximum-margin linear classifier: L2-regularized hinge loss minimized by
/// SGD over shuffled epochs. One-vs-rest for more than two classes. Features
/// are standardized with training statistics.
class LinearProbe {
 public:
  /// Throws std::invalid_argument with fewer than two classes.
  void fit(const Features& x, std::span<const int> y, const LinearProbeConfig& cfg = {});

  /// n x classes().size() decision values, row-major.
  std::vector<double> decision(const Features& x) const;
  std::vector<int> predict(const Features& x) const;
  ClassificationMetrics evaluate(const Features& x, std::span<const int> y) const;

  const std::vector<int>& classes() const { return classes_; }

 private:
  std::vector<int> classes_;
  std::size_t d_ = 0;
  std::vector<double> mean_, inv_std_;
  std::vector<std::vector<double>> w_;  // one per classifier, bias last
};

/// Row indices of a train/test split. `held_out` names the held-out subjects
/// or records.
struct Fold {
  std::vector<std::size_t> train, test;
  std::vector<std::string> held_out;
};

/// Subjects in order of first appearance, subject i in fold i % k. k is
/// clamped to the number of subjects.
std::vector<Fold> subject_folds(const EmbeddingTable& table, std::size_t k);

/// One fold per record. Training rows exclude every record of the held-out
/// record's subject. Throws std::invalid_argument with fewer than two records.
std::vector<Fold> leave_one_record_out(const EmbeddingTable& table);

struct FoldAudit {
  bool covers_all = true;
  bool disjoint = true;
  bool subject_disjoint = true;
  std::string detail;

  bool ok() const { return covers_all && disjoint && subject_disjoint; }
};

/// Test sets must partition the table and no test subject may appear in its training rows.
FoldAudit audit_folds(const EmbeddingTable& table, const std::vector<Fold>& folds);

struct FoldResult {
  std::size_t index = 0;
  std::vector<std::string> held_out;
  std::optional<ClassificationMetrics> metrics;
  std::string warning;
};

struct ProbeReport {
  std::string task;
  std::string label;
  std::vector<FoldResult> folds;
  /// Mean over evaluated folds; AUC over folds where it is defined.
  ClassificationMetrics aggregate;
  std::size_t evaluated = 0;
  bool degenerate = false;
  FoldAudit audit;
};

/// Evaluates one fold. Returns nullopt and sets `warning` to skip it.
using FoldProbe = std::function<std::optional<ClassificationMetrics>(const EmbeddingTable&, const Fold&, std::string& warning)>;

ProbeReport run_folds(const EmbeddingTable& table, const std::vector<Fold>& folds, const FoldProbe& probe);

/// run_folds over leave_one_record_out.
ProbeReport leave_one_out(const EmbeddingTable& table, const FoldProbe& probe);

FoldProbe linear_fold_probe(LabelField field, const LinearProbeConfig& cfg = {});

/// Linear probe over `folds` subject-disjoint folds.
ProbeReport linear_probe(const EmbeddingTable& table, LabelField field, std::size_t folds,
                         const LinearProbeConfig& cfg = {});

void to_json(nlohmann::json& j, const FoldAudit& a);
void to_json(nlohmann::json& j, const ProbeReport& r);

}  // namespace plita::eval
