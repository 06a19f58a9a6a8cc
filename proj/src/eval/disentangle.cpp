#include "plita/eval/disentangle.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "plita/core/rng.hpp"

namespace plita::eval {

using nlohmann::json;

namespace {

std::vector<FeatureRatio> top_ratios(const std::vector<double>& ratio, std::size_t top) {
  std::vector<FeatureRatio> all;
  for (std::size_t f = 0; f < ratio.size(); ++f) all.push_back({f, ratio[f]});
  std::stable_sort(all.begin(), all.end(), [](const FeatureRatio& a, const FeatureRatio& b) { return a.ratio > b.ratio; });
  all.resize(std::min(top, all.size()));
  return all;
}

}  // namespace

std::size_t cluster_size(std::size_t d, std::size_t percent) { return d * percent / 100; }

FeatureClusterReport disentangle(const EmbeddingTable& table, std::size_t top, std::size_t percent) {
  if (!table.normalized) throw std::invalid_argument("disentangle needs a feature-normalized table");
  if (table.dim < 3) throw std::invalid_argument("disentangle needs at least 3 features, got " + std::to_string(table.dim));
  const auto keys = table.record_keys();
  if (keys.size() < 2) throw std::invalid_argument("disentangle needs at least two records");

  FeatureClusterReport rep;
  rep.dim = table.dim;
  rep.cluster_size = cluster_size(table.dim, percent);
  rep.records = keys;
  const std::size_t d = table.dim, k = rep.cluster_size;
  rep.invariant_count.assign(d, 0);
  rep.tempo_variant_count.assign(d, 0);

  for (const auto& key : keys) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (table.rows[r].record_key() == key) rows.push_back(r);
    }
    std::vector<double> var(d, 0.0);
    for (std::size_t f = 0; f < d; ++f) {
      double mean = 0.0;
      for (std::size_t r : rows) mean += table.at(r, f);
      mean /= static_cast<double>(rows.size());
      double v = 0.0;
      for (std::size_t r : rows) v += (table.at(r, f) - mean) * (table.at(r, f) - mean);
      var[f] = v / static_cast<double>(rows.size());
    }
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return var[a] < var[b]; });
    std::vector<std::size_t> low(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<std::size_t> high(order.end() - static_cast<std::ptrdiff_t>(k), order.end());
    for (std::size_t f : low) ++rep.invariant_count[f];
    for (std::size_t f : high) ++rep.tempo_variant_count[f];
    std::sort(low.begin(), low.end());
    std::sort(high.begin(), high.end());
    rep.invariant.push_back(std::move(low));
    rep.tempo_variant.push_back(std::move(high));
    rep.variance.push_back(std::move(var));
  }

  const double n = static_cast<double>(keys.size());
  for (std::size_t f = 0; f < d; ++f) {
    rep.invariant_ratio.push_back(static_cast<double>(rep.invariant_count[f]) / n);
    rep.tempo_variant_ratio.push_back(static_cast<double>(rep.tempo_variant_count[f]) / n);
  }
  rep.top_invariant = top_ratios(rep.invariant_ratio, top);
  rep.top_tempo_variant = top_ratios(rep.tempo_variant_ratio, top);
  return rep;
}

NullBaseline random_baseline(std::size_t d, std::size_t records, std::size_t top, std::size_t percent,
                             std::size_t trials, std::uint64_t seed) {
  const std::size_t k = cluster_size(d, percent);
  NullBaseline b;
  b.trials = trials;
  b.mean_ratio = static_cast<double>(k) / static_cast<double>(d);
  std::vector<double> mins;
  std::vector<std::size_t> perm(d), count(d);
  for (std::size_t t = 0; t < trials; ++t) {
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t r = 0; r < records; ++r) {
      std::iota(perm.begin(), perm.end(), 0);
      core::Rng rng = core::keyed_rng({seed, t, r});
      core::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < k; ++i) ++count[perm[i]];
    }
    std::sort(count.begin(), count.end(), std::greater<>());
    mins.push_back(static_cast<double>(count[std::min(top, d) - 1]) / static_cast<double>(records));
  }
  b.top_min_mean = std::accumulate(mins.begin(), mins.end(), 0.0) / static_cast<double>(trials);
  std::sort(mins.begin(), mins.end());
  b.top_min_q95 = mins[std::min(mins.size() - 1, static_cast<std::size_t>(0.95 * static_cast<double>(mins.size())))];
  return b;
}

std::vector<FeatureImportance> permutation_importance(const LinearProbe& probe, const Features& x,
                                                      std::span<const int> y, std::size_t shuffles,
                                                      std::uint64_t seed) {
  const double base = accuracy(y, probe.predict(x));
  std::vector<FeatureImportance> out;
  Features work = x;
  std::vector<std::size_t> perm(x.n);
  for (std::size_t f = 0; f < x.d; ++f) {
    double drop = 0.0;
    for (std::size_t s = 0; s < shuffles; ++s) {
      std::iota(perm.begin(), perm.end(), 0);
      core::Rng rng = core::keyed_rng({seed, f, s});
      core::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < x.n; ++i) work.x[i * x.d + f] = x.x[perm[i] * x.d + f];
      drop += base - accuracy(y, probe.predict(work));
    }
    for (std::size_t i = 0; i < x.n; ++i) work.x[i * x.d + f] = x.x[i * x.d + f];
    out.push_back({f, drop / static_cast<double>(shuffles)});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.drop > b.drop; });
  return out;
}

std::size_t cluster_overlap(const std::vector<FeatureImportance>& importances, std::size_t k,
                            const std::vector<FeatureRatio>& cluster) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, importances.size()); ++i) {
    for (const auto& c : cluster) hits += c.feature == importances[i].feature;
  }
  return hits;
}

double hypergeometric_mean(std::size_t draws, std::size_t successes, std::size_t population) {
  if (population == 0) throw std::invalid_argument("hypergeometric_mean: empty population");
  return static_cast<double>(draws) * static_cast<double>(successes) / static_cast<double>(population);
}

ImportanceReport importance_study(const EmbeddingTable& table, LabelField field, const FeatureClusterReport& clusters,
                                  const LinearProbeConfig& cfg, std::size_t shuffles, std::size_t top_k) {
  std::vector<std::size_t> rows;
  std::vector<int> y;
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (const auto l = label_of(table.rows[r], field)) {
      rows.push_back(r);
      y.push_back(*l);
    }
  }
  if (rows.empty()) throw std::invalid_argument("table has no " + to_string(field) + " labels");
  const auto x = gather(table, rows);
  LinearProbe probe;
  probe.fit(x, y, cfg);

  ImportanceReport rep;
  rep.label = to_string(field);
  rep.baseline_accuracy = accuracy(y, probe.predict(x));
  rep.ranking = permutation_importance(probe, x, y, shuffles, cfg.seed);
  rep.top_k = top_k;
  rep.overlap_invariant = cluster_overlap(rep.ranking, top_k, clusters.top_invariant);
  rep.overlap_tempo_variant = cluster_overlap(rep.ranking, top_k, clusters.top_tempo_variant);
  rep.expected_overlap = hypergeometric_mean(top_k, clusters.top_invariant.size(), table.dim);
  return rep;
}

void to_json(json& j, const FeatureClusterReport& r) {
  auto tops = [](const std::vector<FeatureRatio>& v) {
    json a = json::array();
    for (const auto& f : v) a.push_back({{"feature", f.feature}, {"ratio", f.ratio}});
    return a;
  };
  j = json{{"dim", r.dim},
           {"cluster_size", r.cluster_size},
           {"records", r.records},
           {"invariant_ratio", r.invariant_ratio},
           {"tempo_variant_ratio", r.tempo_variant_ratio},
           {"top_invariant", tops(r.top_invariant)},
           {"top_tempo_variant", tops(r.top_tempo_variant)},
           {"invariant_clusters", r.invariant},
           {"tempo_variant_clusters", r.tempo_variant}};
}

void to_json(json& j, const NullBaseline& b) {
  j = json{{"mean_ratio", b.mean_ratio}, {"top_min_mean", b.top_min_mean}, {"top_min_q95", b.top_min_q95},
           {"trials", b.trials}};
}

void to_json(json& j, const ImportanceReport& r) {
  json ranking = json::array();
  for (const auto& f : r.ranking) ranking.push_back({{"feature", f.feature}, {"drop", f.drop}});
  j = json{{"label", r.label},
           {"baseline_accuracy", r.baseline_accuracy},
           {"ranking", ranking},
           {"top_k", r.top_k},
           {"overlap_invariant", r.overlap_invariant},
           {"overlap_tempo_variant", r.overlap_tempo_variant},
           {"expected_overlap", r.expected_overlap}};
}

}  // namespace plita::eval
