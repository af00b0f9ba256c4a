#include <polyest/moments.hpp>
#include <polyest/signals.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

using namespace polyest;

namespace {

SignalSpec spec_of(SignalKind kind, std::size_t n, std::uint64_t seed) {
  SignalSpec s;
  s.kind = kind;
  s.length = n;
  s.seed = seed;
  return s;
}

double mean_square(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("polyest_" + name)).string();
}

}  // namespace

TEST(Generate, DeterministicInSpecAndSeed) {
  for (auto kind : {SignalKind::ofdm, SignalKind::filtered_noise, SignalKind::hybrid, SignalKind::iid_noise}) {
    const auto a = generate(spec_of(kind, 4096, 9));
    const auto b = generate(spec_of(kind, 4096, 9));
    const auto c = generate(spec_of(kind, 4096, 10));
    EXPECT_EQ(a, b) << to_string(kind);
    EXPECT_NE(a, c) << to_string(kind);
    EXPECT_EQ(a.size(), 4096u);
  }
}

TEST(Generate, RejectsInvalidSpec) {
  EXPECT_THROW((void)generate(spec_of(SignalKind::ofdm, 0, 1)), InvalidSpec);
  auto s = spec_of(SignalKind::ofdm, 100, 1);
  s.sample_rate = -1.0;
  EXPECT_THROW((void)generate(s), InvalidSpec);
  EXPECT_THROW((void)signal_kind_from_string("chirp"), InvalidSpec);
  EXPECT_EQ(signal_kind_from_string(to_string(SignalKind::hybrid)), SignalKind::hybrid);
}

TEST(Generate, IidChiSquareShape) {
  auto s = spec_of(SignalKind::iid_noise, 1000000, 3);
  s.distribution = ChiSquare{3.0};
  const auto x = generate(s);
  EXPECT_NEAR(sample_cumulants(x, 4).gamma3(), std::sqrt(8.0 / 3.0), 0.02);
}

TEST(Generate, UnitPowerAndBand) {
  const auto ofdm = generate(spec_of(SignalKind::ofdm, 1 << 16, 4));
  const auto fn = generate(spec_of(SignalKind::filtered_noise, 1 << 16, 4));
  EXPECT_NEAR(mean_square(ofdm), 1.0, 1e-12);
  EXPECT_NEAR(mean_square(fn), 1.0, 1e-12);
  // OFDM occupies bins 1..64 of a 256-point symbol: up to a quarter of fs.
  const double fs = 960e3;
  const auto m = spectral_metrics(ofdm, fs);
  EXPECT_LT(m.effective_width, 0.3 * fs);
  EXPECT_GT(m.effective_width, 0.2 * fs);
}

TEST(Generate, FilteredNoiseStopband) {
  const double fs = 960e3;
  const auto x = generate(spec_of(SignalKind::filtered_noise, 1 << 16, 5));
  const auto m = spectral_metrics(x, fs);
  double pass = 0.0, stop = 0.0;
  for (std::size_t k = 0; k < m.psd.size(); ++k) {
    const double f = m.frequencies[k] / (fs / 2);
    if (f < 0.3) pass = std::max(pass, m.psd[k]);
    if (f > 0.5) stop = std::max(stop, m.psd[k]);
  }
  EXPECT_LT(stop, 1e-4 * pass);
}

TEST(LowpassFir, UnitDcGainAndSymmetry) {
  const auto h = lowpass_fir(0.4, 101);
  double sum = 0.0;
  for (double v : h) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-14);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_DOUBLE_EQ(h[i], h[h.size() - 1 - i]);
  EXPECT_THROW((void)lowpass_fir(1.5, 101), InvalidSpec);
  EXPECT_THROW((void)lowpass_fir(0.4, 100), InvalidSpec);
}

TEST(SpectralMetrics, SinusoidIsNarrow) {
  const double fs = 960e3, f0 = 0.1 * fs;
  std::vector<double> x(1 << 15);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2.0 * std::numbers::pi * f0 * n / fs);
  const auto m = spectral_metrics(x, fs);
  EXPECT_LE(m.effective_width, 4.0 * m.bin_width);
  SpectralOptions rms;
  rms.width = WidthDefinition::rms;
  EXPECT_LE(spectral_metrics(x, fs, rms).effective_width, 2.0 * m.bin_width);
}

TEST(SpectralMetrics, WhiteNoiseIsWide) {
  const double fs = 960e3;
  const auto x = generate(spec_of(SignalKind::iid_noise, 1 << 16, 6));
  const auto m = spectral_metrics(x, fs);
  EXPECT_GE(m.effective_width, 0.95 * 0.99 * fs / 2);
  EXPECT_LE(m.effective_width, fs / 2);
}

TEST(SpectralMetrics, AmplitudeInvariant) {
  const double fs = 960e3;
  auto x = generate(spec_of(SignalKind::ofdm, 1 << 14, 7));
  const auto a = spectral_metrics(x, fs);
  for (double& v : x) v *= 3.0;
  const auto b = spectral_metrics(x, fs);
  EXPECT_DOUBLE_EQ(a.effective_width, b.effective_width);
  EXPECT_NEAR(b.total_power, 9.0 * a.total_power, 1e-9 * b.total_power);
}

TEST(SpectralMetrics, ParsevalConsistency) {
  const double fs = 960e3;
  for (auto kind : {SignalKind::ofdm, SignalKind::filtered_noise, SignalKind::hybrid, SignalKind::iid_noise}) {
    const auto x = generate(spec_of(kind, 1 << 16, 8));
    const auto m = spectral_metrics(x, fs);
    EXPECT_NEAR(m.total_power / mean_square(x), 1.0, 0.01) << to_string(kind);
    for (double p : m.psd) EXPECT_GE(p, 0.0);
    EXPECT_GT(m.effective_width, 0.0);
    EXPECT_LE(m.effective_width, fs / 2);
  }
}

TEST(SpectralMetrics, EfficiencyIsRateOverWidth) {
  const double fs = 960e3;
  const auto x = generate(spec_of(SignalKind::ofdm, 1 << 14, 9));
  SpectralOptions opt;
  opt.payload_rate = 1e6;
  const auto m = spectral_metrics(x, fs, opt);
  EXPECT_DOUBLE_EQ(m.spectral_efficiency, 1e6 / m.effective_width);
}

TEST(SpectralMetrics, ShortSignal) {
  const std::vector<double> x(100, 1.0);
  EXPECT_THROW((void)spectral_metrics(x, 1.0), SignalTooShort);
}

TEST(Export, RawRoundTripIsBitIdentical) {
  const auto x = generate(spec_of(SignalKind::hybrid, 1000, 10));
  const auto path = temp_path("raw.f64");
  write_raw_f64(path, x);
  EXPECT_EQ(std::filesystem::file_size(path), 8000u);
  EXPECT_EQ(read_raw_f64(path), x);
  std::ofstream(path, std::ios::app) << 'x';
  EXPECT_THROW((void)read_raw_f64(path), ParseError);
  std::filesystem::remove(path);
}

TEST(Export, CsvRoundTrip) {
  const auto x = generate(spec_of(SignalKind::ofdm, 50, 11));
  const auto path = temp_path("sig.csv");
  write_csv(path, x);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,value");
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    EXPECT_EQ(std::stoul(line.substr(0, comma)), n);
    EXPECT_EQ(std::stod(line.substr(comma + 1)), x[n]);
    ++n;
  }
  EXPECT_EQ(n, x.size());
  std::filesystem::remove(path);
}
