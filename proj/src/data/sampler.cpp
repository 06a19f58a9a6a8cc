#include "plita/data/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace plita::data {

std::vector<double> WindowSample::offset_seconds() const {
  std::vector<double> out;
  out.reserve(offsets.size());
  for (auto o : offsets) out.push_back(static_cast<double>(o) / fs);
  return out;
}

WindowGeometry window_geometry(double window_s, std::size_t n, double fs) {
  if (n < 1) throw std::invalid_argument("N must be >= 1");
  WindowGeometry g;
  g.strip = static_cast<std::size_t>(std::llround(kStripSeconds * fs));
  const double w = std::round(window_s * fs);
  if (!(w >= static_cast<double>(g.strip))) {
    std::ostringstream os;
    os << "infeasible window: W >= 10 s required, got W=" << window_s;
    throw std::invalid_argument(os.str());
  }
  g.window = static_cast<std::size_t>(w);
  if (n == 1) return g;
  g.spacing = (g.window - g.strip) / (n - 1);
  if (g.spacing < g.strip) {
    std::ostringstream os;
    os << "infeasible window: (W - 10)/(N - 1) >= 10 s required, got (" << window_s << " - 10)/(" << n
       << " - 1) = " << (window_s - kStripSeconds) / static_cast<double>(n - 1) << " s";
    throw std::invalid_argument(os.str());
  }
  return g;
}

WindowSample sample_window(const Corpus& corpus, std::size_t record, double window_s, std::size_t n, core::Rng& rng) {
  const Recording& rec = corpus.at(record);
  if (rec.fs != signal::kTargetRate) {
    throw std::invalid_argument(rec.subject_id + "/" + rec.record_id + ": expected 100 Hz samples, got " +
                                std::to_string(rec.fs) + " Hz");
  }
  const WindowGeometry g = window_geometry(window_s, n, rec.fs);
  if (rec.samples.size() < g.window) {
    throw std::invalid_argument(rec.subject_id + "/" + rec.record_id + ": recording of " +
                                std::to_string(rec.duration()) + " s is shorter than W=" + std::to_string(window_s) +
                                " s");
  }
  WindowSample ws;
  ws.record = record;
  ws.fs = rec.fs;
  ws.start = static_cast<std::size_t>(core::uniform_index(rng, rec.samples.size() - g.window + 1));
  ws.strips.reserve(n * g.strip);
  for (std::size_t i = 0; i < n; ++i) {
    ws.offsets.push_back(i * g.spacing);
    const float* first = rec.samples.data() + ws.start + i * g.spacing;
    const auto strip = signal::normalize_strip(std::span<const float>(first, g.strip));
    ws.strips.insert(ws.strips.end(), strip.begin(), strip.end());
  }
  return ws;
}

std::vector<float> TrainingBatch::stacked(int which) const {
  std::vector<float> out;
  if (items.empty()) return out;
  out.reserve(items.size() * items[0].first.strips.size());
  for (const auto& item : items) {
    const auto& s = which == 0 ? item.first.strips : item.second.strips;
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

namespace {

bool window_passes(const WindowSample& ws, const signal::QualityPredicate& predicate) {
  const std::size_t strip = signal::kStripSamples;
  for (std::size_t i = 0; i < ws.count(); ++i) {
    if (!signal::quality_gate(std::span<const float>(ws.strips.data() + i * strip, strip), predicate)) return false;
  }
  return true;
}

}  // namespace

TrainingBatch build_batch(const SubjectPairIndex& index, const BatchConfig& cfg, std::uint64_t seed,
                          std::uint64_t iteration, const signal::QualityPredicate& predicate) {
  if (index.empty()) throw std::invalid_argument("build_batch: no subject has two records");
  if (cfg.batch < 1) throw std::invalid_argument("build_batch: batch size must be >= 1");
  window_geometry(cfg.window_s, cfg.n);

  const Corpus& corpus = index.corpus();
  TrainingBatch batch;
  batch.n = cfg.n;
  std::vector<bool> skipped(index.size(), false);
  std::size_t n_skipped = 0;
  for (std::uint64_t slot = 0; slot < cfg.batch; ++slot) {
    core::Rng rng = core::keyed_rng({seed, iteration, slot});
    bool filled = false;
    while (!filled) {
      if (n_skipped == index.size()) {
        throw CorpusQualityError("every subject exhausted its retry budget of " + std::to_string(cfg.max_retries) +
                                 " windows at iteration " + std::to_string(iteration));
      }
      auto pick = static_cast<std::size_t>(core::uniform_index(rng, index.size() - n_skipped));
      std::size_t p = 0;
      for (;; ++p) {
        if (skipped[p]) continue;
        if (pick-- == 0) break;
      }
      const SubjectPair& pair = index.pairs()[p];
      for (std::size_t attempt = 0; attempt <= cfg.max_retries && !filled; ++attempt) {
        BatchItem item;
        item.pair = p;
        item.first = sample_window(corpus, pair.first, cfg.window_s, cfg.n, rng);
        item.second = sample_window(corpus, pair.second, cfg.window_s, cfg.n, rng);
        if (window_passes(item.first, predicate) && window_passes(item.second, predicate)) {
          batch.items.push_back(std::move(item));
          filled = true;
        }
      }
      if (!filled) {
        skipped[p] = true;
        ++n_skipped;
      }
    }
  }
  return batch;
}

}  // namespace plita::data
