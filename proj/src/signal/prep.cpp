#include "plita/signal/prep.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

namespace plita::signal {

namespace {

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

double kaiser(double x, double beta) {
  if (std::abs(x) > 1.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(1.0 - x * x)) / std::cyl_bessel_i(0.0, beta);
}

std::uint64_t milli_hz(double rate) {
  const double scaled = rate * 1000.0;
  const double rounded = std::round(scaled);
  if (std::abs(scaled - rounded) > 1e-6 * std::max(1.0, scaled)) {
    throw std::invalid_argument("sampling rate " + std::to_string(rate) + " Hz has more than 3 decimals");
  }
  return static_cast<std::uint64_t>(rounded);
}

}  // namespace

PolyphaseResampler::PolyphaseResampler(double input_rate, double output_rate, ResamplerConfig config) {
  if (!(input_rate > 0.0) || !(output_rate > 0.0)) {
    throw std::invalid_argument("resampler rates must be positive (got " + std::to_string(input_rate) + " -> " +
                                std::to_string(output_rate) + ")");
  }
  if (config.taps_per_phase < 2 || config.taps_per_phase % 2) {
    throw std::invalid_argument("taps_per_phase must be even and >= 2");
  }
  const std::uint64_t in = milli_hz(input_rate);
  const std::uint64_t out = milli_hz(output_rate);
  const std::uint64_t g = std::gcd(in, out);
  up_ = static_cast<std::size_t>(out / g);
  down_ = static_cast<std::size_t>(in / g);
  if (up_ > 4096) throw std::invalid_argument("resampling ratio needs more than 4096 phases");

  // Kernel in units of input samples.
  const double stretch = std::max(1.0, static_cast<double>(down_) / static_cast<double>(up_));
  const std::size_t half = static_cast<std::size_t>(std::ceil(static_cast<double>(config.taps_per_phase) / 2.0 * stretch));
  taps_ = 2 * half;
  // Kaiser transition width in cycles/sample for the chosen attenuation.
  const double atten_db = config.kaiser_beta / 0.1102 + 8.7;
  const double transition = (atten_db - 7.95) / (14.36 * static_cast<double>(taps_));
  const double cutoff = std::max(0.05, 0.5 / stretch - transition / 2.0);

  table_.assign(up_ * taps_, 0.0);
  for (std::size_t p = 0; p < up_; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up_);
    double total = 0.0;
    for (std::size_t k = 0; k < taps_; ++k) {
      const double t = static_cast<double>(k) - static_cast<double>(half) + 1.0 - frac;
      const double h = 2.0 * cutoff * sinc(2.0 * cutoff * t) * kaiser(t / static_cast<double>(half), config.kaiser_beta);
      table_[p * taps_ + k] = h;
      total += h;
    }
    for (std::size_t k = 0; k < taps_; ++k) table_[p * taps_ + k] /= total;
  }
}

std::size_t PolyphaseResampler::output_length(std::size_t input_length) const {
  if (input_length == 0) return 0;
  return (input_length - 1) * up_ / down_ + 1;
}

std::vector<double> PolyphaseResampler::process(std::span<const double> input) const {
  const std::size_t n_out = output_length(input.size());
  std::vector<double> out(n_out, 0.0);
  const std::ptrdiff_t n_in = static_cast<std::ptrdiff_t>(input.size());
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(taps_ / 2);
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::size_t pos = n * down_;
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(pos / up_);
    const std::size_t phase = pos % up_;
    const double* h = table_.data() + phase * taps_;
    double acc = 0.0;
    const std::ptrdiff_t first = base - half + 1;
    for (std::size_t k = 0; k < taps_; ++k) {
      const std::ptrdiff_t j = first + static_cast<std::ptrdiff_t>(k);
      if (j >= 0 && j < n_in) acc += h[k] * input[static_cast<std::size_t>(j)];
    }
    out[n] = acc;
  }
  return out;
}

RawSignal resample(const RawSignal& sig, double target_fs, ResamplerConfig config) {
  if (!(target_fs > 0.0)) throw std::invalid_argument("target rate must be positive, got " + std::to_string(target_fs));
  if (!(sig.fs > 0.0)) throw std::invalid_argument("input rate must be positive, got " + std::to_string(sig.fs));
  if (sig.fs == target_fs) return sig;
  PolyphaseResampler rs(sig.fs, target_fs, config);
  return RawSignal{rs.process(sig.samples), target_fs};
}

// ---------------------------------------------------------------------------

std::vector<Biquad> butterworth_highpass(int order, double fc, double fs) {
  if (order < 1) throw std::invalid_argument("butterworth order must be >= 1");
  if (!(fs > 0.0) || !(fc > 0.0) || !(fc < fs / 2.0)) {
    throw std::invalid_argument("high-pass cutoff " + std::to_string(fc) + " Hz must lie in (0, fs/2) for fs=" +
                                std::to_string(fs) + " Hz");
  }
  const double k = 2.0 * fs;
  const double wc = k * std::tan(M_PI * fc / fs);  // prewarped analog cutoff
  std::vector<Biquad> sos;
  for (int i = 0; i < order / 2; ++i) {
    const double re = std::cos(M_PI * (2.0 * i + order + 1.0) / (2.0 * order));
    const double a = -2.0 * re * wc;
    const double d0 = k * k + a * k + wc * wc;
    Biquad s;
    s.b0 = k * k / d0;
    s.b1 = -2.0 * k * k / d0;
    s.b2 = k * k / d0;
    s.a1 = (2.0 * wc * wc - 2.0 * k * k) / d0;
    s.a2 = (k * k - a * k + wc * wc) / d0;
    sos.push_back(s);
  }
  if (order % 2) {
    const double d0 = k + wc;
    Biquad s;
    s.b0 = k / d0;
    s.b1 = -k / d0;
    s.a1 = (wc - k) / d0;
    sos.push_back(s);
  }
  return sos;
}

double magnitude_response(std::span<const Biquad> sos, double f, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * M_PI * f / fs);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

namespace {

struct State {
  double z1 = 0, z2 = 0;
};

void run_sections(std::span<const Biquad> sos, std::vector<State>& st, std::vector<double>& x) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& q = sos[s];
    double z1 = st[s].z1, z2 = st[s].z2;
    for (double& v : x) {
      const double y = q.b0 * v + z1;
      z1 = q.b1 * v - q.a1 * y + z2;
      z2 = q.b2 * v - q.a2 * y;
      v = y;
    }
    st[s] = {z1, z2};
  }
}

// Steady-state states for a unit step at the cascade input.
std::vector<State> step_states(std::span<const Biquad> sos) {
  std::vector<State> zi(sos.size());
  double u = 1.0;
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const Biquad& q = sos[s];
    const double gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y = gain * u;
    zi[s] = {y - q.b0 * u, q.b2 * u - q.a2 * y};
    u = y;
  }
  return zi;
}

std::vector<State> scaled(const std::vector<State>& zi, double x0) {
  std::vector<State> out = zi;
  for (auto& s : out) {
    s.z1 *= x0;
    s.z2 *= x0;
  }
  return out;
}

}  // namespace

std::vector<double> sos_filter(std::span<const Biquad> sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  std::vector<State> st(sos.size());
  run_sections(sos, st, y);
  return y;
}

std::vector<double> sos_filtfilt(std::span<const Biquad> sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  std::size_t zero_b2 = 0, zero_a2 = 0;
  for (const auto& s : sos) {
    zero_b2 += s.b2 == 0.0;
    zero_a2 += s.a2 == 0.0;
  }
  const std::size_t padlen = std::min(n - 1, 3 * (2 * sos.size() + 1 - std::min(zero_b2, zero_a2)));

  // Odd extension: 2*x[0] - x[padlen..1], x, 2*x[n-1] - x[n-2..n-1-padlen].
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_states(sos);
  auto st = scaled(zi, ext.front());
  run_sections(sos, st, ext);
  std::reverse(ext.begin(), ext.end());
  st = scaled(zi, ext.front());
  run_sections(sos, st, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen), ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

RawSignal highpass_butterworth(const RawSignal& sig, int order, double fc) {
  const auto sos = butterworth_highpass(order, fc, sig.fs);
  return RawSignal{sos_filtfilt(sos, sig.samples), sig.fs};
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kDegenerateVariance = 1e-12;

template <typename In, typename Out>
void normalize_into(std::span<const In> x, std::vector<Out>& out) {
  const std::size_t n = x.size();
  out.assign(n, Out(0));
  if (n == 0) return;
  double mean = 0.0;
  for (auto v : x) mean += static_cast<double>(v);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (auto v : x) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
  var /= static_cast<double>(n);
  if (var < kDegenerateVariance) return;
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<Out>((static_cast<double>(x[i]) - mean) * inv);
}

}  // namespace

CleanSignal normalize_unit_variance(const RawSignal& sig) {
  CleanSignal out;
  out.fs = sig.fs;
  normalize_into<double, double>(sig.samples, out.samples);
  out.provenance.push_back("normalize_unit_variance");
  return out;
}

std::vector<float> normalize_strip(std::span<const float> strip) {
  std::vector<float> out;
  normalize_into<float, float>(strip, out);
  return out;
}

RawSignal prefilter(const RawSignal& sig) {
  if (sig.samples.empty()) throw std::invalid_argument("cannot clean an empty signal");
  return highpass_butterworth(resample(sig, kTargetRate));
}

CleanSignal clean(const RawSignal& sig) {
  CleanSignal out = normalize_unit_variance(prefilter(sig));
  out.provenance = {"resample(" + std::to_string(sig.fs) + "->100)", "highpass_butterworth(order=5,fc=0.5)",
                    "normalize_unit_variance"};
  return out;
}

// ---------------------------------------------------------------------------

QualityPredicate accept_all() {
  return [](std::span<const float>) { return true; };
}

QualityPredicate flatline_detector(double min_variance, std::size_t window) {
  return [min_variance, window](std::span<const float> x) {
    if (x.size() < window) return true;
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
      s += x[i];
      s2 += static_cast<double>(x[i]) * x[i];
    }
    const double w = static_cast<double>(window);
    for (std::size_t i = window;; ++i) {
      const double m = s / w;
      if (s2 / w - m * m < min_variance) return false;
      if (i == x.size()) break;
      s += x[i] - x[i - window];
      s2 += static_cast<double>(x[i]) * x[i] - static_cast<double>(x[i - window]) * x[i - window];
    }
    return true;
  };
}

QualityPredicate clipping_detector(double max_fraction) {
  return [max_fraction](std::span<const float> x) {
    if (x.empty()) return true;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*lo == *hi) return false;
    std::size_t at_rail = 0;
    for (float v : x) at_rail += (v == *lo || v == *hi);
    return static_cast<double>(at_rail) <= max_fraction * static_cast<double>(x.size());
  };
}

QualityPredicate all_of(std::vector<QualityPredicate> predicates) {
  return [preds = std::move(predicates)](std::span<const float> x) {
    return std::all_of(preds.begin(), preds.end(), [&](const QualityPredicate& p) { return p(x); });
  };
}

bool quality_gate(std::span<const float> strip, const QualityPredicate& predicate) {
  if (strip.size() != kStripSamples) {
    throw std::invalid_argument("quality gate expects a " + std::to_string(kStripSamples) + "-sample strip, got " +
                                std::to_string(strip.size()));
  }
  return predicate ? predicate(strip) : true;
}

}  // namespace plita::signal
