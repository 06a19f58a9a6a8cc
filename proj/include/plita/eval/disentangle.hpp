#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "plita/eval/embeddings.hpp"
#include "plita/eval/probe.hpp"

namespace plita::eval {

struct FeatureRatio {
  std::size_t feature = 0;
  double ratio = 0.0;
};

struct FeatureClusterReport {
  std::size_t dim = 0;
  std::size_t cluster_size = 0;
  std::vector<std::string> records;
  std::vector<std::vector<double>> variance;  // [record][feature], population variance
  /// Per record: the cluster_size lowest- and highest-variance features.
  std::vector<std::vector<std::size_t>> invariant, tempo_variant;
  std::vector<std::size_t> invariant_count, tempo_variant_count;
  std::vector<double> invariant_ratio, tempo_variant_ratio;
  /// Highest appearance ratios, ties broken toward the lower feature index.
  std::vector<FeatureRatio> top_invariant, top_tempo_variant;
};

/// floor(percent/100 * d) evaluated exactly; 33 percent gives 42 of 128.
std::size_t cluster_size(std::size_t d, std::size_t percent = 33);

/// Ranks features by intra-record variance (ties toward the lower index).
/// Requires a normalized table with at least two records and three features.
FeatureClusterReport disentangle(const EmbeddingTable& table, std::size_t top = 20, std::size_t percent = 33);

/// Appearance ratios when every record's clusters are uniform random subsets.
struct NullBaseline {
  double mean_ratio = 0.0;      // expectation of a single feature's ratio
  double top_min_mean = 0.0;    // mean of the smallest top-`top` ratio
  double top_min_q95 = 0.0;     // its 95th percentile
  std::size_t trials = 0;
};

NullBaseline random_baseline(std::size_t d, std::size_t records, std::size_t top = 20, std::size_t percent = 33,
                             std::size_t trials = 2000, std::uint64_t seed = 0);

struct FeatureImportance {
  std::size_t feature = 0;
  double drop = 0.0;
};

/// Mean accuracy drop when each feature column is shuffled (`shuffles` times)
/// across rows of `x`. Sorted by drop, ties toward the lower index.
std::vector<FeatureImportance> permutation_importance(const LinearProbe& probe, const Features& x,
                                                      std::span<const int> y, std::size_t shuffles = 10,
                                                      std::uint64_t seed = 0);

/// |top ∩ cluster| where top holds the first `k` importances.
std::size_t cluster_overlap(const std::vector<FeatureImportance>& importances, std::size_t k,
                            const std::vector<FeatureRatio>& cluster);

/// Mean of the hypergeometric distribution: draws * successes / population.
double hypergeometric_mean(std::size_t draws, std::size_t successes, std::size_t population);

struct ImportanceReport {
  std::string label;
  double baseline_accuracy = 0.0;
  std::vector<FeatureImportance> ranking;
  std::size_t top_k = 5;
  std::size_t overlap_invariant = 0, overlap_tempo_variant = 0;
  double expected_overlap = 0.0;
};

/// Fits a linear probe on every labeled row and ranks features by
/// permutation importance on those rows; overlaps are against the top
/// clusters of `clusters`.
ImportanceReport importance_study(const EmbeddingTable& table, LabelField field, const FeatureClusterReport& clusters,
                                  const LinearProbeConfig& cfg = {}, std::size_t shuffles = 10, std::size_t top_k = 5);

void to_json(nlohmann::json& j, const FeatureClusterReport& r);
void to_json(nlohmann::json& j, const NullBaseline& b);
void to_json(nlohmann::json& j, const ImportanceReport& r);

}  // namespace plita::eval
