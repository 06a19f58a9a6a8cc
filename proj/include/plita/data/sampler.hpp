#pragma once

#include <cstdint>
#include <stdexcept>

#include "plita/data/recording.hpp"
#include "plita/core/rng.hpp"
#include "plita/signal/prep.hpp"

namespace plita::data {

/// N equally spaced, time-sorted 10 s strips cut from one window of a recording.
struct WindowSample {
  std::size_t record = 0;           // index into the corpus
  std::size_t start = 0;            // window start, samples
  std::vector<std::size_t> offsets; // strip starts relative to `start`, samples
  std::vector<float> strips;        // N x 1000, each strip normalized
  double fs = 100.0;

  std::size_t count() const { return offsets.size(); }
  double start_seconds() const { return static_cast<double>(start) / fs; }
  std::vector<double> offset_seconds() const;
};

struct WindowGeometry {
  std::size_t window = 0;   // samples
  std::size_t spacing = 0;  // samples between strip starts
  std::size_t strip = 0;    // samples per strip
};

/// Integer-sample layout of N strips in a W-second window. The spacing is
/// floor((W - 10) * fs / (N - 1)) so the last strip stays inside the window.
/// Throws std::invalid_argument naming the violated inequality when
/// (W - 10) / (N - 1) < 10 s or W < 10 s.
WindowGeometry window_geometry(double window_s, std::size_t n, double fs = 100.0);

/// Window start uniform over the valid sample range. Throws when the
/// recording is shorter than W or not at 100 Hz.
WindowSample sample_window(const Corpus& corpus, std::size_t record, double window_s, std::size_t n,
                           core::Rng& rng);

struct BatchItem {
  std::size_t pair = 0;  // index into SubjectPairIndex::pairs()
  WindowSample first, second;
};

struct TrainingBatch {
  std::size_t n = 0;
  std::vector<BatchItem> items;

  std::size_t size() const { return items.size(); }
  /// Strips of record `which` (0 or 1) for all items, B x N x 1000 row-major.
  std::vector<float> stacked(int which) const;
};

class CorpusQualityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BatchConfig {
  std::size_t batch = 32;
  std::size_t n = 4;
  double window_s = 120.0;
  std::size_t max_retries = 8;
};

/// Slot b draws its subject (with replacement) and windows from
/// keyed_rng(seed, iteration, b), so content depends only on those keys.
/// A window with any strip rejected by `predicate` is redrawn up to
/// `max_retries` times; after that the subject is skipped and another one
/// drawn. Throws CorpusQualityError when every subject has been skipped.
TrainingBatch build_batch(const SubjectPairIndex& index, const BatchConfig& cfg, std::uint64_t seed,
                          std::uint64_t iteration, const signal::QualityPredicate& predicate = signal::accept_all());

}  // namespace plita::data
