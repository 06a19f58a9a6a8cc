#pragma once

#include <array>
#include <cstdint>

#include "plita/data/recording.hpp"

namespace plita::data {

/// Five Gaussian waves (P, Q, R, S, T): amplitude, width (s) and center
/// relative to the R peak (s, at RR = 1 s).
struct Morphology {
  std::array<double, 5> amplitude{};
  std::array<double, 5> width{};
  std::array<double, 5> center{};
};

struct SyntheticConfig {
  std::size_t subjects = 8;
  std::size_t states = 2;
  double duration_s = 600.0;
  double fs = 250.0;
  double noise = 0.05;
  double mean_dwell_s = 60.0;
  /// RR interval and T-wave gain at the first and last state; intermediate
  /// states interpolate linearly.
  double rr_first = 1.0, rr_last = 0.7;
  double t_gain_first = 1.4, t_gain_last = 0.6;
  double hrv = 0.03;
  double baseline_wander = 0.15;
  /// Candidate morphologies whose template correlation with an existing
  /// subject reaches this value are redrawn.
  double max_template_correlation = 0.85;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const SyntheticConfig& cfg);

struct SyntheticCorpus {
  Corpus records;                      // raw, at cfg.fs, two per subject
  std::vector<Morphology> morphology;  // per subject
};

/// Two recordings per subject sharing morphology but with independent state
/// trajectories, gain and noise. Deterministic in `seed`.
SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

/// One noise-free beat of `morph` at RR interval `rr`, sampled at `fs`,
/// centered on the R peak over [-0.4 s, 0.6 s).
std::vector<double> beat_template(const Morphology& morph, double rr, double fs, double t_gain = 1.0);

/// Zero-lag Pearson correlation of two equal-length sequences.
double correlation(const std::vector<double>& a, const std::vector<double>& b);

/// Mean beat from a recording given R-peak sample positions found by
/// thresholded peak picking. Used to check morphology separation.
std::vector<double> average_beat(const Recording& rec);

/// Resample + high-pass every record to 100 Hz float samples; labels and ids carried over.
Corpus prefilter_corpus(const Corpus& raw);

}  // namespace plita::data
