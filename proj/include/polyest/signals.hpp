#pragma once

// Seeded test-signal generators (OFDM, low-pass filtered noise, tone plus
// noise, iid noise), Welch power spectral density with effective-width
// metrics, and CSV / raw float64 export.

#include <polyest/distributions.hpp>
#include <polyest/errors.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace polyest {

enum class SignalKind { ofdm, filtered_noise, hybrid, iid_noise };

[[nodiscard]] inline std::string to_string(SignalKind k) {
  switch (k) {
    case SignalKind::ofdm: return "ofdm";
    case SignalKind::filtered_noise: return "filtered-noise";
    case SignalKind::hybrid: return "hybrid";
    case SignalKind::iid_noise: return "iid-noise";
  }
  return "?";
}

[[nodiscard]] inline SignalKind signal_kind_from_string(const std::string& s) {
  if (s == "ofdm") return SignalKind::ofdm;
  if (s == "filtered-noise") return SignalKind::filtered_noise;
  if (s == "hybrid") return SignalKind::hybrid;
  if (s == "iid-noise") return SignalKind::iid_noise;
  throw InvalidSpec("unknown signal kind '" + s + "'");
}

struct OfdmParams {
  int subcarriers = 64;
  /// Transform length is 2 * oversample * subcarriers.
  int oversample = 2;
  int cyclic_prefix = 16;
};

struct FilterParams {
  /// Cutoff as a fraction of the Nyquist frequency.
  double cutoff = 0.4;
  /// Odd tap count of the Hamming-windowed sinc low-pass.
  int taps = 101;
};

struct HybridParams {
  /// Tone frequency as a fraction of the sample rate.
  double tone_frequency = 0.05;
  double snr_db = 10.0;
};

struct SignalSpec {
  SignalKind kind = SignalKind::ofdm;
  std::size_t length = 0;
  double sample_rate = 960e3;
  std::uint64_t seed = 0;
  OfdmParams ofdm;
  FilterParams filter;
  HybridParams hybrid;
  /// Noise law for iid-noise and the noise part of hybrid.
  Distribution distribution = Normal{};
};

inline void validate(const SignalSpec& s) {
  if (s.length == 0) throw InvalidSpec("length must be > 0");
  if (!(s.sample_rate > 0.0) || !std::isfinite(s.sample_rate)) throw InvalidSpec("sample_rate must be > 0");
  switch (s.kind) {
    case SignalKind::ofdm:
      if (s.ofdm.subcarriers < 1 || s.ofdm.oversample < 1 || s.ofdm.cyclic_prefix < 0)
        throw InvalidSpec("ofdm needs subcarriers >= 1, oversample >= 1, cyclic_prefix >= 0");
      break;
    case SignalKind::filtered_noise:
      if (!(s.filter.cutoff > 0.0 && s.filter.cutoff < 1.0)) throw InvalidSpec("cutoff must lie in (0, 1)");
      if (s.filter.taps < 3 || s.filter.taps % 2 == 0) throw InvalidSpec("filter taps must be odd and >= 3");
      break;
    case SignalKind::hybrid:
      if (!(s.hybrid.tone_frequency > 0.0 && s.hybrid.tone_frequency < 0.5))
        throw InvalidSpec("tone_frequency must lie in (0, 0.5)");
      if (!std::isfinite(s.hybrid.snr_db)) throw InvalidSpec("snr_db must be finite");
      break;
    case SignalKind::iid_noise: break;
  }
  try {
    detail::validate(s.distribution);
  } catch (const UnsupportedDistribution& e) {
    throw InvalidSpec(e.what());
  }
}

/// Linear-phase low-pass FIR: Hamming-windowed sinc, unit DC gain.
[[nodiscard]] inline std::vector<double> lowpass_fir(double cutoff, int taps) {
  if (!(cutoff > 0.0 && cutoff < 1.0) || taps < 3 || taps % 2 == 0) throw InvalidSpec("invalid low-pass design");
  std::vector<double> h(static_cast<std::size_t>(taps));
  const int mid = taps / 2;
  double sum = 0.0;
  // Built from |n - mid| so the taps are exactly symmetric (linear phase).
  for (int k = 0; k <= mid; ++k) {
    const double sinc = k == 0 ? cutoff : std::sin(std::numbers::pi * cutoff * k) / (std::numbers::pi * k);
    const double w = 0.54 + 0.46 * std::cos(2.0 * std::numbers::pi * k / (taps - 1));
    h[static_cast<std::size_t>(mid + k)] = h[static_cast<std::size_t>(mid - k)] = sinc * w;
  }
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

namespace detail {

inline void normalize_power(std::vector<double>& x) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  if (ms > 0.0) {
    const double s = 1.0 / std::sqrt(ms);
    for (double& v : x) v *= s;
  }
}

inline std::vector<double> white_gaussian(std::size_t n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) v = nd(rng);
  return out;
}

inline std::vector<double> generate_ofdm(const SignalSpec& s, Rng& rng) {
  const int k = s.ofdm.subcarriers;
  const int len = 2 * s.ofdm.oversample * k;
  const int cp = std::min(s.ofdm.cyclic_prefix, len);
  static constexpr double kLevels[4] = {-3.0, -1.0, 1.0, 3.0};
  const double qam_scale = 1.0 / std::sqrt(10.0);
  std::uniform_int_distribution<int> pick(0, 3);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(len));
  std::vector<double> symbol;
  std::vector<double> out;
  out.reserve(s.length + static_cast<std::size_t>(len + cp));
  while (out.size() < s.length) {
    std::fill(spectrum.begin(), spectrum.end(), std::complex<double>(0.0, 0.0));
    for (int b = 1; b <= k; ++b) {
      const double re = kLevels[pick(rng)] * qam_scale;
      const double im = kLevels[pick(rng)] * qam_scale;
      spectrum[static_cast<std::size_t>(b)] = {re, im};
      spectrum[static_cast<std::size_t>(len - b)] = {re, -im};
    }
    fft.inv(symbol, spectrum);
    out.insert(out.end(), symbol.end() - cp, symbol.end());
    out.insert(out.end(), symbol.begin(), symbol.end());
  }
  out.resize(s.length);
  normalize_power(out);
  return out;
}

inline std::vector<double> generate_filtered_noise(const SignalSpec& s, Rng& rng) {
  const auto h = lowpass_fir(s.filter.cutoff, s.filter.taps);
  const auto w = white_gaussian(s.length + h.size() - 1, rng);
  std::vector<double> out(s.length);
  for (std::size_t n = 0; n < s.length; ++n) {
    double acc = 0.0;
    for (std::size_t t = 0; t < h.size(); ++t) acc += h[t] * w[n + h.size() - 1 - t];
    out[n] = acc;
  }
  normalize_power(out);
  return out;
}

inline std::vector<double> generate_hybrid(const SignalSpec& s, Rng& rng) {
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  const auto lc = analytic_cumulants(s.distribution);
  const double noise_power = 0.5 / std::pow(10.0, s.hybrid.snr_db / 10.0);
  const double scale = lc.cumulants.c2() > 0.0 ? std::sqrt(noise_power / lc.cumulants.c2()) : 0.0;
  std::vector<double> out(s.length);
  for (std::size_t n = 0; n < s.length; ++n) {
    const double tone = std::sin(2.0 * std::numbers::pi * s.hybrid.tone_frequency * static_cast<double>(n) + phase);
    out[n] = tone + scale * (draw(s.distribution, rng) - lc.mean);
  }
  return out;
}

}  // namespace detail

/// Deterministic in (spec, seed). OFDM frames and filtered noise are
/// scaled to unit mean power; the hybrid tone has unit amplitude.
[[nodiscard]] inline std::vector<double> generate(const SignalSpec& spec) {
  validate(spec);
  Rng rng = make_rng(spec.seed);
  switch (spec.kind) {
    case SignalKind::ofdm: return detail::generate_ofdm(spec, rng);
    case SignalKind::filtered_noise: return detail::generate_filtered_noise(spec, rng);
    case SignalKind::hybrid: return detail::generate_hybrid(spec, rng);
    case SignalKind::iid_noise: return draw_n(spec.distribution, spec.length, rng);
  }
  throw InvalidSpec("unhandled signal kind");
}

enum class WidthDefinition { power_fraction, rms };

[[nodiscard]] inline std::string to_string(WidthDefinition w) {
  return w == WidthDefinition::power_fraction ? "power-fraction" : "rms";
}

struct SpectralOptions {
  /// Welch segment length; Hann window, 50% overlap.
  std::size_t segment = 256;
  WidthDefinition width = WidthDefinition::power_fraction;
  /// Fraction of total power the effective width must contain.
  double power_fraction = 0.99;
  /// Numerator of spectral_efficiency (e.g. bit/s).
  double payload_rate = 1.0;
};

struct SpectralMetrics {
  /// One-sided density at frequencies k * sample_rate / segment.
  std::vector<double> psd;
  std::vector<double> frequencies;
  double bin_width = 0.0;
  double total_power = 0.0;
  double effective_width = 0.0;
  double spectral_efficiency = 0.0;
};

/// One-sided Welch PSD (sum of psd * bin_width over all bins equals the
/// windowed mean square).
[[nodiscard]] inline std::vector<double> welch_psd(std::span<const double> x, double sample_rate,
                                                   std::size_t segment = 256) {
  if (segment < 4 || segment % 2 != 0) throw InvalidSpec("segment length must be even and >= 4");
  if (x.size() < segment)
    throw SignalTooShort("signal of length " + std::to_string(x.size()) + " is shorter than one segment (" +
                         std::to_string(segment) + ")");
  const std::size_t hop = segment / 2;
  std::vector<double> window(segment);
  double u = 0.0;
  for (std::size_t n = 0; n < segment; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(segment));
    u += window[n] * window[n];
  }
  Eigen::FFT<double> fft;
  std::vector<double> buf(segment);
  std::vector<std::complex<double>> spec;
  std::vector<double> acc(segment / 2 + 1, 0.0);
  std::size_t count = 0;
  for (std::size_t start = 0; start + segment <= x.size(); start += hop, ++count) {
    for (std::size_t n = 0; n < segment; ++n) buf[n] = x[start + n] * window[n];
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += std::norm(spec[k]);
  }
  const double norm = 1.0 / (sample_rate * u * static_cast<double>(count));
  for (std::size_t k = 0; k < acc.size(); ++k) {
    const bool edge = k == 0 || k == acc.size() - 1;
    acc[k] *= norm * (edge ? 1.0 : 2.0);
  }
  return acc;
}

/// Welch PSD plus effective width. The power-fraction width is the smallest
/// total bandwidth of PSD bins (taken in decreasing order of density)
/// holding `power_fraction` of the power; the DC and Nyquist bins count as
/// half a bin. The RMS width is the standard deviation of frequency under
/// the normalized one-sided PSD.
[[nodiscard]] inline SpectralMetrics spectral_metrics(std::span<const double> x, double sample_rate,
                                                      const SpectralOptions& opt = {}) {
  if (!(sample_rate > 0.0)) throw InvalidSpec("sample_rate must be > 0");
  if (!(opt.power_fraction > 0.0 && opt.power_fraction <= 1.0)) throw InvalidSpec("power_fraction must lie in (0, 1]");
  SpectralMetrics m;
  m.psd = welch_psd(x, sample_rate, opt.segment);
  m.bin_width = sample_rate / static_cast<double>(opt.segment);
  const std::size_t bins = m.psd.size();
  m.frequencies.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) m.frequencies[k] = static_cast<double>(k) * m.bin_width;
  for (double p : m.psd) m.total_power += p * m.bin_width;
  const double nyquist = sample_rate / 2.0;
  if (!(m.total_power > 0.0)) {
    m.effective_width = 0.0;
  } else if (opt.width == WidthDefinition::power_fraction) {
    std::vector<std::size_t> order(bins);
    for (std::size_t k = 0; k < bins; ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m.psd[a] > m.psd[b]; });
    const double target = opt.power_fraction * m.total_power;
    double power = 0.0;
    double width = 0.0;
    for (std::size_t k : order) {
      power += m.psd[k] * m.bin_width;
      width += (k == 0 || k == bins - 1) ? 0.5 * m.bin_width : m.bin_width;
      if (power >= target * (1.0 - 1e-12)) break;
    }
    m.effective_width = std::min(width, nyquist);
  } else {
    double mean = 0.0;
    for (std::size_t k = 0; k < bins; ++k) mean += m.frequencies[k] * m.psd[k] * m.bin_width;
    mean /= m.total_power;
    double var = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double d = m.frequencies[k] - mean;
      var += d * d * m.psd[k] * m.bin_width;
    }
    m.effective_width = std::min(std::sqrt(var / m.total_power), nyquist);
  }
  m.spectral_efficiency = m.effective_width > 0.0 ? opt.payload_rate / m.effective_width : 0.0;
  return m;
}

/// Writes "index,value" rows with a header line.
inline void write_csv(const std::string& path, std::span<const double> x) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "index,value\n";
  char buf[64];
  for (std::size_t n = 0; n < x.size(); ++n) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", n, x[n]);
    out << buf;
  }
  if (!out) throw Error("write to '" + path + "' failed");
}

/// Writes the samples as consecutive little-endian IEEE-754 float64 values.
inline void write_raw_f64(const std::string& path, std::span<const double> x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (double v : x) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw Error("write to '" + path + "' failed");
}

[[nodiscard]] inline std::vector<double> read_raw_f64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::vector<double> out;
  unsigned char bytes[8];
  while (in.read(reinterpret_cast<char*>(bytes), 8)) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    out.push_back(std::bit_cast<double>(bits));
  }
  if (in.gcount() != 0) throw ParseError("'" + path + "' length is not a multiple of 8 bytes");
  return out;
}

}  // namespace polyest
