#include "plita/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "plita/core/rng.hpp"
#include "plita/signal/prep.hpp"

namespace plita::data {

namespace {

using core::normal;
using core::Rng;
using core::uniform;

enum Wave { P = 0, Q = 1, R = 2, S = 3, T = 4 };

constexpr std::array<double, 5> kBaseAmplitude{0.15, -0.12, 1.0, -0.22, 0.30};
constexpr std::array<double, 5> kBaseWidth{0.025, 0.010, 0.011, 0.010, 0.045};
constexpr std::array<double, 5> kBaseCenter{-0.20, -0.035, 0.0, 0.035, 0.28};

constexpr std::uint64_t kMorphologyStream = 0x6d6f7270686f6c6fULL;

Morphology draw_morphology(Rng& rng, int attribute) {
  Morphology m;
  const std::array<std::pair<double, double>, 5> amp_range{{{0.5, 1.5}, {0.3, 1.8}, {0.7, 1.3}, {0.3, 1.8}, {0.5, 1.5}}};
  for (int w = 0; w < 5; ++w) {
    m.amplitude[w] = kBaseAmplitude[w] * uniform(rng, amp_range[w].first, amp_range[w].second);
    m.width[w] = kBaseWidth[w] * uniform(rng, 0.7, 1.4);
    m.center[w] = kBaseCenter[w];
  }
  m.center[P] += uniform(rng, -0.04, 0.04);
  m.center[T] += uniform(rng, -0.05, 0.05);
  if (attribute == 1) {
    for (int w : {Q, R, S}) m.width[w] *= 1.5;
    m.amplitude[P] *= 1.6;
  }
  return m;
}

double state_value(double first, double last, std::size_t state, std::size_t states) {
  if (states < 2) return first;
  const double t = static_cast<double>(state) / static_cast<double>(states - 1);
  return first + t * (last - first);
}

double wave_center(const Morphology& m, int w, double rr) {
  return w == T ? m.center[w] * std::sqrt(rr) : m.center[w];
}

void add_beat(std::vector<double>& x, double fs, double t_peak, const Morphology& m, double rr, double t_gain) {
  for (int w = 0; w < 5; ++w) {
    const double amp = m.amplitude[w] * (w == T ? t_gain : 1.0);
    const double c = t_peak + wave_center(m, w, rr);
    const double b = m.width[w];
    const auto lo = static_cast<std::ptrdiff_t>(std::ceil((c - 5 * b) * fs));
    const auto hi = static_cast<std::ptrdiff_t>(std::floor((c + 5 * b) * fs));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0); i <= hi && i < static_cast<std::ptrdiff_t>(x.size()); ++i) {
      const double d = static_cast<double>(i) / fs - c;
      x[static_cast<std::size_t>(i)] += amp * std::exp(-d * d / (2 * b * b));
    }
  }
}

// Per-sample state sequence of a Markov jump process with dwell max(10 s, Exp(mean)).
std::vector<int> state_trajectory(const SyntheticConfig& cfg, std::size_t n, Rng& rng) {
  std::vector<int> states(n);
  auto state = static_cast<int>(core::uniform_index(rng, cfg.states));
  std::size_t i = 0;
  while (i < n) {
    const double dwell = std::max(10.0, -cfg.mean_dwell_s * std::log(1.0 - core::uniform01(rng)));
    const std::size_t end = std::min(n, i + static_cast<std::size_t>(std::llround(dwell * cfg.fs)));
    std::fill(states.begin() + static_cast<std::ptrdiff_t>(i), states.begin() + static_cast<std::ptrdiff_t>(end), state);
    i = end;
    const auto step = 1 + static_cast<int>(core::uniform_index(rng, cfg.states - 1));
    state = (state + step) % static_cast<int>(cfg.states);
  }
  return states;
}

Recording make_record(const SyntheticConfig& cfg, const Morphology& m, const std::string& subject,
                      const std::string& record, int attribute, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));
  const auto states = state_trajectory(cfg, n, rng);
  std::vector<double> x(n, 0.0);
  double t = uniform(rng, 0.0, 1.0);
  while (t < cfg.duration_s + 1.0) {
    const std::size_t idx = std::min(n - 1, static_cast<std::size_t>(t * cfg.fs));
    const auto s = static_cast<std::size_t>(states[idx]);
    const double rr =
        state_value(cfg.rr_first, cfg.rr_last, s, cfg.states) * (1.0 + cfg.hrv * normal(rng));
    add_beat(x, cfg.fs, t, m, rr, state_value(cfg.t_gain_first, cfg.t_gain_last, s, cfg.states));
    t += rr;
  }
  const double gain = uniform(rng, 0.8, 1.2);
  const double f1 = uniform(rng, 0.1, 0.3), p1 = uniform(rng, 0.0, 2 * M_PI);
  const double f2 = uniform(rng, 0.03, 0.08), p2 = uniform(rng, 0.0, 2 * M_PI);
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) / cfg.fs;
    const double wander = cfg.baseline_wander * (std::sin(2 * M_PI * f1 * ti + p1) + std::sin(2 * M_PI * f2 * ti + p2));
    x[i] = gain * x[i] + wander + cfg.noise * normal(rng);
  }

  Recording rec;
  rec.subject_id = subject;
  rec.record_id = record;
  rec.fs = cfg.fs;
  rec.samples.assign(x.begin(), x.end());
  rec.subject_attribute = attribute;
  const std::size_t strip = static_cast<std::size_t>(std::llround(kStripSeconds * cfg.fs));
  std::vector<int> labels;
  for (std::size_t k = 0; (k + 1) * strip <= n; ++k) labels.push_back(majority_label(states, k * strip, (k + 1) * strip));
  rec.labels = std::move(labels);
  return rec;
}

}  // namespace

void validate(const SyntheticConfig& cfg) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("synthetic config: " + what); };
  if (cfg.subjects < 1) fail("subjects must be >= 1");
  if (cfg.states < 2) fail("states must be >= 2 (got " + std::to_string(cfg.states) + ")");
  if (!(cfg.duration_s >= kStripSeconds)) fail("duration must be >= 10 s");
  if (!(cfg.fs >= 50.0)) fail("fs must be >= 50 Hz");
  if (!(cfg.noise >= 0.0)) fail("noise must be >= 0");
  if (!(cfg.mean_dwell_s > kStripSeconds)) fail("mean dwell time must exceed 10 s");
  if (!(cfg.rr_first > 0.3 && cfg.rr_last > 0.3)) fail("RR intervals must exceed 0.3 s");
  if (!(cfg.max_template_correlation > 0.0 && cfg.max_template_correlation <= 1.0)) {
    fail("max_template_correlation must lie in (0, 1]");
  }
}

std::vector<double> beat_template(const Morphology& m, double rr, double fs, double t_gain) {
  const auto before = static_cast<std::size_t>(std::llround(0.4 * fs));
  const auto len = static_cast<std::size_t>(std::llround(1.0 * fs));
  std::vector<double> x(len, 0.0);
  add_beat(x, fs, static_cast<double>(before) / fs, m, rr, t_gain);
  return x;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("correlation needs equal, non-empty lengths");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> average_beat(const Recording& rec) {
  const double fs = rec.fs;
  const auto before = static_cast<std::ptrdiff_t>(std::llround(0.4 * fs));
  const auto len = static_cast<std::ptrdiff_t>(std::llround(1.0 * fs));
  const auto guard = static_cast<std::ptrdiff_t>(std::llround(0.25 * fs));
  const auto& x = rec.samples;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  // Robust threshold: half of the 99th percentile of |x|.
  std::vector<float> mag(x.size());
  std::transform(x.begin(), x.end(), mag.begin(), [](float v) { return std::abs(v); });
  const auto q = mag.begin() + static_cast<std::ptrdiff_t>(0.99 * static_cast<double>(mag.size() - 1));
  std::nth_element(mag.begin(), q, mag.end());
  const float thr = 0.5f * *q;

  std::vector<double> acc(static_cast<std::size_t>(len), 0.0);
  std::size_t beats = 0;
  for (std::ptrdiff_t i = before; i + len - before < n; ++i) {
    if (x[i] < thr) continue;
    bool is_max = true;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - guard); j <= std::min(n - 1, i + guard) && is_max; ++j) {
      if (x[j] > x[i] || (x[j] == x[i] && j < i)) is_max = false;
    }
    if (!is_max) continue;
    for (std::ptrdiff_t k = 0; k < len; ++k) acc[static_cast<std::size_t>(k)] += x[i - before + k];
    ++beats;
  }
  if (beats) for (double& v : acc) v /= static_cast<double>(beats);
  return acc;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  SyntheticCorpus out;
  Rng morph_rng = core::keyed_rng({seed, kMorphologyStream});
  std::vector<int> attributes(cfg.subjects);
  for (std::size_t s = 0; s < cfg.subjects; ++s) attributes[s] = static_cast<int>(s % 2);
  core::shuffle(attributes.begin(), attributes.end(), morph_rng);

  std::vector<std::vector<double>> templates;
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    constexpr int kMaxDraws = 20000;
    bool accepted = false;
    for (int draw = 0; draw < kMaxDraws && !accepted; ++draw) {
      Morphology m = draw_morphology(morph_rng, attributes[s]);
      auto tmpl = beat_template(m, 1.0, cfg.fs);
      accepted = std::all_of(templates.begin(), templates.end(), [&](const std::vector<double>& other) {
        return correlation(tmpl, other) < cfg.max_template_correlation;
      });
      if (accepted) {
        out.morphology.push_back(m);
        templates.push_back(std::move(tmpl));
      }
    }
    if (!accepted) {
      throw std::invalid_argument("synthetic config: could not separate " + std::to_string(cfg.subjects) +
                                  " morphologies below correlation " + std::to_string(cfg.max_template_correlation));
    }
  }

  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    char subject[32];
    std::snprintf(subject, sizeof subject, "s%02zu", s);
    for (std::uint64_t r = 0; r < 2; ++r) {
      Rng rng = core::keyed_rng({seed, s, r});
      out.records.push_back(make_record(cfg, out.morphology[s], subject, "r" + std::to_string(r + 1), attributes[s], rng));
    }
  }
  return out;
}

Corpus prefilter_corpus(const Corpus& raw) {
  Corpus out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    signal::RawSignal sig{std::vector<double>(r.samples.begin(), r.samples.end()), r.fs};
    const auto clean = signal::prefilter(sig);
    Recording c = r;
    c.fs = signal::kTargetRate;
    c.samples.assign(clean.samples.begin(), clean.samples.end());
    if (c.labels && c.labels->size() > c.strip_count()) c.labels->resize(c.strip_count());
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace plita::data
