#include "plita/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>
#include <stdexcept>

namespace plita::eval {

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double macro_f1(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("macro_f1: length mismatch");
  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(predicted.begin(), predicted.end());
  if (classes.empty()) return 0.0;
  double total = 0.0;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c, p = predicted[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    const double denom = 2.0 * static_cast<double>(tp) + static_cast<double>(fp + fn);
    total += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return total / static_cast<double>(classes.size());
}

double mann_whitney_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (positive[i]) {
      rank_sum += rank[i];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double one_vs_rest_auc(std::span<const int> truth, std::span<const double> scores, std::span<const int> classes) {
  const std::size_t k = classes.size(), n = truth.size();
  if (scores.size() != n * k) throw std::invalid_argument("auc: score matrix does not match labels x classes");
  auto column_auc = [&](std::size_t c) {
    std::vector<double> s(n);
    std::unique_ptr<bool[]> pos(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores[i * k + c];
      pos[i] = truth[i] == classes[c];
    }
    return mann_whitney_auc(s, std::span<const bool>(pos.get(), n));
  };
  if (k == 2) return column_auc(1);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double a = column_auc(c);
    if (!std::isnan(a)) {
      total += a;
      ++used;
    }
  }
  return used ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

ClassificationMetrics evaluate_scores(std::span<const int> truth, std::span<const double> scores,
                                      std::span<const int> classes) {
  const std::size_t k = classes.size(), n = truth.size();
  if (k == 0 || scores.size() != n * k) throw std::invalid_argument("evaluate: score matrix does not match labels");
  std::vector<int> predicted(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = scores.subspan(i * k, k);
    predicted[i] = classes[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())];
  }
  ClassificationMetrics m;
  m.n = n;
  m.accuracy = accuracy(truth, predicted);
  m.macro_f1 = macro_f1(truth, predicted);
  m.auc = k >= 2 ? one_vs_rest_auc(truth, scores, classes) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

void to_json(nlohmann::json& j, const ClassificationMetrics& m) {
  j = nlohmann::json{{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"n", m.n}};
  j["auc"] = std::isnan(m.auc) ? nlohmann::json(nullptr) : nlohmann::json(m.auc);
}

}  // namespace plita::eval
