#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace plita::signal {

inline constexpr double kTargetRate = 100.0;
inline constexpr std::size_t kStripSamples = 1000;  // 10 s at 100 Hz

struct RawSignal {
  std::vector<double> samples;
  double fs = 0.0;
};

/// Output of the cleaning chain. `provenance` lists applied steps in order.
struct CleanSignal {
  std::vector<double> samples;
  double fs = kTargetRate;
  std::vector<std::string> provenance;
};

// ---------------------------------------------------------------------------
// Resampling

struct ResamplerConfig {
  /// Taps per polyphase branch at the lower of the two rates. Decimation
  /// stretches the kernel by the rate ratio so the cutoff tracks the output
  /// Nyquist frequency.
  std::size_t taps_per_phase = 64;
  double kaiser_beta = 8.6;
};

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
/// Samples outside the input are treated as zero.
class PolyphaseResampler {
 public:
  PolyphaseResampler(double input_rate, double output_rate, ResamplerConfig config = {});

  std::vector<double> process(std::span<const double> input) const;
  /// floor((n - 1) * up / down) + 1: every output instant lies inside the input span.
  std::size_t output_length(std::size_t input_length) const;

  std::size_t up() const { return up_; }
  std::size_t down() const { return down_; }
  std::size_t taps() const { return taps_; }

 private:
  std::size_t up_ = 1, down_ = 1, taps_ = 0;
  std::vector<double> table_;  // up_ phases x taps_
};

/// Throws std::invalid_argument for non-positive rates.
RawSignal resample(const RawSignal& sig, double target_fs = kTargetRate, ResamplerConfig config = {});

// ---------------------------------------------------------------------------
// Butterworth high-pass

/// Direct-form-II-transposed biquad, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

/// Bilinear-transformed Butterworth high-pass as cascaded sections (one
/// first-order section for odd orders). Throws unless 0 < fc < fs/2.
std::vector<Biquad> butterworth_highpass(int order, double fc, double fs);

/// |H(e^{jw})| of the cascade at frequency `f`.
double magnitude_response(std::span<const Biquad> sos, double f, double fs);

/// Single causal pass from zero state.
std::vector<double> sos_filter(std::span<const Biquad> sos, std::span<const double> x);

/// Forward-backward pass with odd-extension padding and steady-state initial
/// conditions. Zero phase; squared magnitude response.
std::vector<double> sos_filtfilt(std::span<const Biquad> sos, std::span<const double> x);

RawSignal highpass_butterworth(const RawSignal& sig, int order = 5, double fc = 0.5);

// ---------------------------------------------------------------------------
// Normalization and the chain

/// Subtract the mean and divide by the population standard deviation.
/// Inputs with variance below 1e-12 map to all zeros.
CleanSignal normalize_unit_variance(const RawSignal& sig);
std::vector<float> normalize_strip(std::span<const float> strip);

/// resample -> high-pass. Used for whole recordings; normalization happens per strip.
RawSignal prefilter(const RawSignal& sig);

/// resample -> high-pass -> normalize, with provenance.
CleanSignal clean(const RawSignal& sig);

// ---------------------------------------------------------------------------
// Strip quality

/// Returns true to accept a 10 s strip.
using QualityPredicate = std::function<bool(std::span<const float>)>;

QualityPredicate accept_all();
/// Rejects strips where any `window`-sample sub-window has variance below `min_variance`.
QualityPredicate flatline_detector(double min_variance = 1e-4, std::size_t window = 200);
/// Rejects strips where more than `max_fraction` of samples sit at the strip min or max.
QualityPredicate clipping_detector(double max_fraction = 0.05);
QualityPredicate all_of(std::vector<QualityPredicate> predicates);

/// Applies `predicate` to a strip of exactly kStripSamples samples; throws
/// std::invalid_argument naming the length otherwise.
bool quality_gate(std::span<const float> strip, const QualityPredicate& predicate);

}  // namespace plita::signal
