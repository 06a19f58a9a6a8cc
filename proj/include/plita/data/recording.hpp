#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace plita::data {

inline constexpr double kStripSeconds = 10.0;

/// One subject's continuous signal. Samples are stored prefiltered
/// (resampled + high-passed); per-strip normalization happens when strips are cut.
struct Recording {
  std::string subject_id;
  std::string record_id;
  double fs = 100.0;
  std::vector<float> samples;
  /// Class id per 10 s strip; length floor(duration / 10 s) when present.
  std::optional<std::vector<int>> labels;
  /// Optional binary subject-level attribute (e.g. the generator's gender analog).
  std::optional<int> subject_attribute;

  double duration() const { return fs > 0 ? static_cast<double>(samples.size()) / fs : 0.0; }
  std::size_t strip_count() const;
};

using Corpus = std::vector<Recording>;

/// Throws std::invalid_argument on duplicate (subject, record) keys, fs <= 0,
/// empty samples, or a label sequence of the wrong length.
void validate(const Corpus& corpus);

struct SubjectPair {
  std::string subject_id;
  std::size_t first = 0;   // index into the corpus
  std::size_t second = 0;
};

/// Subjects with at least two records, each paired with its first two
/// records in record_id order. Subjects with a single record are left out.
class SubjectPairIndex {
 public:
  explicit SubjectPairIndex(const Corpus& corpus);

  const Corpus& corpus() const { return *corpus_; }
  const std::vector<SubjectPair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

 private:
  const Corpus* corpus_;
  std::vector<SubjectPair> pairs_;
};

/// Frequency of the most common label; 0 for an empty sequence.
double modal_fraction(const std::vector<int>& labels);

/// Keeps records whose modal label frequency is at most `threshold`
/// (inclusive, evaluated exactly for thresholds with up to 6 decimals).
/// Records without labels are dropped.
Corpus select_dynamic_records(const Corpus& records, double threshold = 0.8);

/// Majority label over [begin, end) of a per-sample state sequence; ties go to the lower id.
int majority_label(const std::vector<int>& states, std::size_t begin, std::size_t end);

}  // namespace plita::data
