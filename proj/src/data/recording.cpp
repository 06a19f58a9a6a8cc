#include "plita/data/recording.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace plita::data {

std::size_t Recording::strip_count() const {
  if (fs <= 0) return 0;
  return static_cast<std::size_t>(std::floor(duration() / kStripSeconds + 1e-9));
}

void validate(const Corpus& corpus) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : corpus) {
    const std::string key = r.subject_id + "/" + r.record_id;
    if (r.subject_id.empty() || r.record_id.empty()) throw std::invalid_argument("record with empty id: " + key);
    if (!seen.emplace(r.subject_id, r.record_id).second) throw std::invalid_argument("duplicate record " + key);
    if (!(r.fs > 0)) throw std::invalid_argument(key + ": fs must be positive, got " + std::to_string(r.fs));
    if (r.samples.empty()) throw std::invalid_argument(key + ": no samples");
    if (r.labels && r.labels->size() != r.strip_count()) {
      throw std::invalid_argument(key + ": " + std::to_string(r.labels->size()) + " labels for " +
                                  std::to_string(r.strip_count()) + " strips");
    }
  }
}

SubjectPairIndex::SubjectPairIndex(const Corpus& corpus) : corpus_(&corpus) {
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < corpus.size(); ++i) by_subject[corpus[i].subject_id].push_back(i);
  for (auto& [subject, idx] : by_subject) {
    if (idx.size() < 2) continue;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return corpus[a].record_id < corpus[b].record_id; });
    pairs_.push_back({subject, idx[0], idx[1]});
  }
}

double modal_fraction(const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  std::size_t best = 0;
  for (const auto& [label, c] : counts) best = std::max(best, c);
  return static_cast<double>(best) / static_cast<double>(labels.size());
}

Corpus select_dynamic_records(const Corpus& records, double threshold) {
  const auto scaled = static_cast<long long>(std::llround(threshold * 1e6));
  Corpus kept;
  for (const auto& r : records) {
    if (!r.labels || r.labels->empty()) continue;
    std::map<int, long long> counts;
    for (int l : *r.labels) ++counts[l];
    long long best = 0;
    for (const auto& [label, c] : counts) best = std::max(best, c);
    if (best * 1000000LL <= scaled * static_cast<long long>(r.labels->size())) kept.push_back(r);
  }
  return kept;
}

int majority_label(const std::vector<int>& states, std::size_t begin, std::size_t end) {
  if (begin >= end || end > states.size()) throw std::out_of_range("majority_label: empty or out-of-range span");
  std::map<int, std::size_t> counts;
  for (std::size_t i = begin; i < end; ++i) ++counts[states[i]];
  int best = counts.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [label, c] : counts) {
    if (c > best_count) {
      best = label;
      best_count = c;
    }
  }
  return best;
}

}  // namespace plita::data
