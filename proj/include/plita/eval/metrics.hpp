#pragma once

#include <cstddef>
#include <json.hpp>
#include <limits>
#include <span>
#include <vector>

namespace plita::eval {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  /// NaN when the evaluated labels hold a single class.
  double auc = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
};

double accuracy(std::span<const int> truth, std::span<const int> predicted);

/// Mean per-class F1 over every class occurring in `truth` or `predicted`.
double macro_f1(std::span<const int> truth, std::span<const int> predicted);

/// Mann-Whitney estimate of P(score of a positive > score of a negative),
/// ties counted as one half through midranks. NaN without both groups.
double mann_whitney_auc(std::span<const double> scores, std::span<const bool> positive);

/// scores: n x classes.size(), row-major. Binary problems use the second
/// class's score; more classes average one-vs-rest AUCs over the classes that
/// have both positives and negatives.
double one_vs_rest_auc(std::span<const int> truth, std::span<const double> scores, std::span<const int> classes);

/// Predictions are the argmax of each score row (first maximum wins).
ClassificationMetrics evaluate_scores(std::span<const int> truth, std::span<const double> scores,
                                      std::span<const int> classes);

void to_json(nlohmann::json& j, const ClassificationMetrics& m);

}  // namespace plita::eval
