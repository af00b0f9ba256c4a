#pragma once

// Monte-Carlo scenarios. Each scenario turns (sample size, replicate seed)
// into result rows; estimator failures become error rows.

#include <polyest/changepoint.hpp>
#include <polyest/distributions.hpp>
#include <polyest/errors.hpp>
#include <polyest/harness/config.hpp>
#include <polyest/harness/results.hpp>
#include <polyest/moments.hpp>
#include <polyest/pmm.hpp>
#include <polyest/regression.hpp>
#include <polyest/signals.hpp>
#include <polyest/sls.hpp>
#include <polyest/volterra.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace polyest::harness {

/// MSE ratio numerator/denominator reported per case and sample size.
struct Comparison {
  std::string numerator;
  std::string denominator;
};

class ScenarioRunner {
 public:
  virtual ~ScenarioRunner() = default;
  /// Rows for one replicate; the runner fills scenario, sample size,
  /// replicate index and seed.
  [[nodiscard]] virtual std::vector<ResultRecord> replicate(std::size_t n, std::uint64_t seed) const = 0;
  [[nodiscard]] virtual std::vector<Comparison> comparisons() const { return {}; }
  [[nodiscard]] virtual json metadata() const { return json::object(); }
};

struct ScenarioInfo {
  std::string name;
  std::string description;
  json defaults;
  std::function<std::unique_ptr<ScenarioRunner>(const Params&, const ExperimentConfig&)> make;
};

namespace detail {

/// Independent stream for case `index` within a replicate.
inline Rng case_rng(std::uint64_t seed, std::size_t index) { return make_rng(seed ^ mix_seed(index + 1)); }

/// Runs `fn` and appends its row, or an error row if it throws.
inline void attempt(std::vector<ResultRecord>& rows, const std::string& case_name, const std::string& estimator,
                    const std::function<void(ResultRecord&)>& fn) {
  ResultRecord r;
  r.case_name = case_name;
  r.estimator = estimator;
  try {
    fn(r);
  } catch (const std::exception& e) {
    r.status = "error";
    r.estimates.clear();
    r.sq_errors.clear();
    r.metrics.clear();
    r.error = e.what();
  }
  rows.push_back(std::move(r));
}

inline std::vector<double> squared_errors(const Eigen::VectorXd& est, const Eigen::VectorXd& truth) {
  std::vector<double> out(static_cast<std::size_t>(est.size()));
  for (Eigen::Index i = 0; i < est.size(); ++i) out[static_cast<std::size_t>(i)] = std::pow(est(i) - truth(i), 2);
  return out;
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline std::string describe(const json& d) {
  std::string s = d.value("family", std::string("?"));
  if (d.contains("params") && !d.at("params").empty()) {
    s += '(';
    bool first = true;
    for (const auto& p : d.at("params")) {
      if (!first) s += ' ';
      first = false;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", p.get<double>());
      s += buf;
    }
    s += ')';
  }
  return s;
}

struct NoiseCase {
  std::string label;
  Distribution dist;
  json descriptor;
};

inline std::vector<NoiseCase> noise_cases(const Params& p, const char* key) {
  const json& list = p.raw().at(key);
  if (!list.is_array() || list.empty()) throw ConfigError(std::string("params.") + key + " must be a non-empty list");
  std::vector<NoiseCase> out;
  for (const auto& d : list) {
    NoiseCase c;
    c.dist = Params::parse_distribution(d, key);
    c.label = d.value("label", describe(d));
    c.descriptor = d;
    out.push_back(std::move(c));
  }
  return out;
}

inline void require_subset(const std::vector<std::string>& values, std::initializer_list<const char*> allowed,
                           const std::string& what) {
  for (const auto& v : values) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || v == a;
    if (!ok) throw ConfigError("unknown " + what + " '" + v + "'");
  }
}

}  // namespace detail

// ---------------------------------------------------------------- location

/// Location estimation: sample mean vs PMM2 (and optionally PMM3).
class LocationScenario : public ScenarioRunner {
 public:
  explicit LocationScenario(const Params& p) {
    cases_ = detail::noise_cases(p, "distributions");
    estimators_ = p.get<std::vector<std::string>>("estimators");
    detail::require_subset(estimators_, {"mean", "PMM2", "PMM3"}, "estimator");
    known_ = p.get<bool>("known_cumulants");
  }

  std::vector<ResultRecord> replicate(std::size_t n, std::uint64_t seed) const override {
    std::vector<ResultRecord> rows;
    for (std::size_t c = 0; c < cases_.size(); ++c) {
      const auto& nc = cases_[c];
      Rng rng = detail::case_rng(seed, c);
      const auto sample = draw_n(nc.dist, n, rng);
      const auto lc = analytic_cumulants(nc.dist);
      const Eigen::VectorXd truth = Eigen::VectorXd::Constant(1, lc.mean);
      for (const auto& est : estimators_) {
        detail::attempt(rows, nc.label, est, [&](ResultRecord& r) {
          Eigen::VectorXd th(1);
          if (est == "mean") {
            th(0) = sample_mean(sample);
          } else if (est == "PMM2") {
            const auto e = pmm2_location(sample, known_ ? std::optional(lc.cumulants) : std::nullopt);
            th = e.theta_hat;
            r.metrics = {{"g", e.g_coefficient}, {"iterations", e.iterations}, {"converged", e.converged}};
          } else {
            const auto c6 = known_ ? lc.cumulants : sample_cumulants(sample, 6);
            const auto e = pmm3_estimate_location(sample, c6);
            th = e.theta_hat;
            r.metrics = {{"g", e.g_coefficient}, {"iterations", e.iterations}, {"converged", e.converged}};
          }
          r.estimates = detail::to_vector(th);
          r.sq_errors = detail::squared_errors(th, truth);
        });
      }
    }
    return rows;
  }

  std::vector<Comparison> comparisons() const override { return {{"PMM2", "mean"}, {"PMM3", "mean"}}; }

  json metadata() const override {
    json cases = json::array();
    for (const auto& nc : cases_) {
      const auto lc = analytic_cumulants(nc.dist);
      json c{{"case", nc.label}, {"mean", lc.mean}, {"gamma3", lc.cumulants.gamma3()}, {"gamma4", lc.cumulants.gamma4()}};
      try {
        c["g2_analytic"] = variance_reduction_g2(lc.cumulants.gamma3(), lc.cumulants.gamma4());
      } catch (const Error&) {
        c["g2_analytic"] = nullptr;
      }
      cases.push_back(c);
    }
    return {{"cases", cases}, {"known_cumulants", known_}, {"truth", "analytic distribution mean"}};
  }

 private:
  std::vector<detail::NoiseCase> cases_;
  std::vector<std::string> estimators_;
  bool known_ = false;
};

// -------------------------------------------------------------- regression

/// Regression y = R(theta, x) + noise with x on an equispaced grid; compares
/// least squares, PMM2 and SLS (scalar omega weighting, and the two-step
/// optimal weight matrix as "SLS-opt").
class RegressionScenario : public ScenarioRunner {
 public:
  explicit RegressionScenario(const Params& p) {
    model_ = p.get<std::string>("model");
    if (model_ != "linear" && model_ != "exponential" && model_ != "growth")
      throw ConfigError("unknown model '" + model_ + "'");
    const auto theta = p.get<std::vector<double>>("theta");
    theta_ = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    const int k = model_ == "linear" ? 2 : model_ == "exponential" ? 2 : 3;
    if (theta_.size() != k) throw ConfigError("model '" + model_ + "' takes " + std::to_string(k) + " parameters");
    const auto range = p.get<std::vector<double>>("x_range");
    if (range.size() != 2 || !(range[1] > range[0])) throw ConfigError("x_range must be [lo, hi] with lo < hi");
    x_lo_ = range[0];
    x_hi_ = range[1];
    noise_sd_ = p.positive("noise_sd");
    cases_ = detail::noise_cases(p, "noises");
    estimators_ = p.get<std::vector<std::string>>("estimators");
    detail::require_subset(estimators_, {"OLS", "PMM2", "SLS", "SLS-opt"}, "estimator");
    const json& om = p.raw().at("omega");
    if (om.is_string()) {
      if (om.get<std::string>() != "auto") throw ConfigError("omega must be a number or \"auto\"");
    } else if (om.is_number() && om.get<double>() >= 0.0) {
      omega_ = om.get<double>();
    } else {
      throw ConfigError("omega must be a nonnegative number or \"auto\"");
    }
  }

  std::vector<ResultRecord> replicate(std::size_t n, std::uint64_t seed) const override {
    if (model_ == "linear") return run(LinearResponse{2}, n, seed);
    if (model_ == "exponential") return run(ExponentialResponse{}, n, seed);
    return run(GrowthResponse{}, n, seed);
  }

  std::vector<Comparison> comparisons() const override {
    return {{"PMM2", "OLS"}, {"SLS", "OLS"}, {"PMM2", "SLS"}, {"SLS-opt", "OLS"}, {"PMM2", "SLS-opt"}};
  }

  json metadata() const override {
    json cases = json::array();
    for (const auto& nc : cases_) {
      const auto lc = analytic_cumulants(nc.dist);
      json c{{"case", nc.label}, {"gamma3", lc.cumulants.gamma3()}, {"gamma4", lc.cumulants.gamma4()}};
      try {
        c["g2_analytic"] = variance_reduction_g2(lc.cumulants.gamma3(), lc.cumulants.gamma4());
      } catch (const Error&) {
        c["g2_analytic"] = nullptr;
      }
      cases.push_back(c);
    }
    return {{"cases", cases},
            {"design", "x equispaced on x_range"},
            {"noise", "centered draws scaled to noise_sd"},
            {"initial_values", "true theta for the nonlinear least-squares start"},
            {"omega", omega_ ? json(*omega_) : json("auto: asymptotic-variance grid minimizer at the LS fit")}};
  }

 private:
  Eigen::MatrixXd design(std::size_t n) const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), model_ == "linear" ? 2 : 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = n > 1 ? x_lo_ + (x_hi_ - x_lo_) * static_cast<double>(i) / static_cast<double>(n - 1) : x_lo_;
      if (model_ == "linear") {
        x(static_cast<Eigen::Index>(i), 0) = 1.0;
        x(static_cast<Eigen::Index>(i), 1) = t;
      } else {
        x(static_cast<Eigen::Index>(i), 0) = t;
      }
    }
    return x;
  }

  template <Response R>
  std::vector<ResultRecord> run(const R& response, std::size_t n, std::uint64_t seed) const {
    std::vector<ResultRecord> rows;
    const Eigen::MatrixXd x = design(n);
    const Eigen::VectorXd clean = response_values(response, theta_, x);
    for (std::size_t c = 0; c < cases_.size(); ++c) {
      const auto& nc = cases_[c];
      Rng rng = detail::case_rng(seed, c);
      const double scale = noise_sd_ / std::sqrt(analytic_cumulants(nc.dist).cumulants.c2());
      const auto e = draw_centered(nc.dist, n, rng, scale);
      const Eigen::VectorXd y = clean + Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(n));

      std::optional<Eigen::VectorXd> ls;
      std::optional<CumulantSet> resid;
      try {
        ls = least_squares_fit(response, x, y, theta_);
        const Eigen::VectorXd res = y - response_values(response, *ls, x);
        resid = sample_cumulants(std::span<const double>(res.data(), n), 4);
      } catch (const std::exception&) {
        // Reported through the estimator rows below.
      }
      for (const auto& est : estimators_) {
        detail::attempt(rows, nc.label, est, [&](ResultRecord& r) {
          if (!ls) {
            (void)least_squares_fit(response, x, y, theta_);  // rethrows the fit error
            throw NoConvergence("least-squares stage failed");
          }
          Eigen::VectorXd th;
          if (est == "OLS") {
            th = *ls;
          } else if (est == "PMM2") {
            if (!resid) throw DegenerateSample("residual cumulants unavailable");
            const auto p = pmm2_refine(response, x, y, *ls, *resid);
            th = p.theta_hat;
            r.metrics = {{"g", p.g_coefficient}, {"iterations", p.iterations}, {"converged", p.converged}};
          } else if (est == "SLS") {
            if (!resid) throw DegenerateSample("residual cumulants unavailable");
            SlsProblem<R> prob{response, x, y, omega_ ? *omega_ : sls_default_omega(*resid, response, x, *ls), {}};
            const auto s = sls_estimate(prob, *ls);
            th = s.theta_hat;
            r.metrics = {{"omega", prob.omega}, {"sigma2", s.sigma2_hat}, {"iterations", s.iterations}};
          } else {
            if (!resid) throw DegenerateSample("residual cumulants unavailable");
            SlsProblem<R> prob{response, x, y, 0.0, {}, SlsWeighting::optimal, *resid};
            const auto s = sls_estimate(prob, *ls);
            th = s.theta_hat;
            r.metrics = {{"sigma2", s.sigma2_hat}, {"iterations", s.iterations}};
          }
          r.estimates = detail::to_vector(th);
          r.sq_errors = detail::squared_errors(th, theta_);
        });
      }
    }
    return rows;
  }

  std::string model_;
  Eigen::VectorXd theta_;
  double x_lo_ = 0.0, x_hi_ = 1.0, noise_sd_ = 1.0;
  std::vector<detail::NoiseCase> cases_;
  std::vector<std::string> estimators_;
  std::optional<double> omega_;
};

// ---------------------------------------------------------------- spectral

/// Signals pass a fixed quadratic memory channel with additive white noise;
/// a second-order Volterra post-equalizer is adapted on (channel output ->
/// clean input) and the effective width of its output is compared with that
/// of the channel output.
class SpectralScenario : public ScenarioRunner {
 public:
  explicit SpectralScenario(const Params& p) {
    signals_ = p.get<std::vector<std::string>>("signals");
    detail::require_subset(signals_, {"ofdm", "filtered-noise", "hybrid", "white-noise"}, "signal");
    const json& ch = p.raw().at("channel");
    try {
      const auto h1 = ch.at("h1").get<std::vector<double>>();
      const auto h2 = ch.at("h2").get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd q(static_cast<Eigen::Index>(h2.size()), static_cast<Eigen::Index>(h2.size()));
      for (std::size_t i = 0; i < h2.size(); ++i) {
        if (h2[i].size() != h2.size()) throw ConfigError("channel.h2 must be square");
        for (std::size_t j = 0; j < h2.size(); ++j)
          q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h2[i][j];
      }
      channel_ = VolterraKernels(ch.value("h0", 0.0),
                                 Eigen::Map<const Eigen::VectorXd>(h1.data(), static_cast<Eigen::Index>(h1.size())), q);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("params.channel: ") + e.what());
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("params.channel: ") + e.what());
    }
    snr_db_ = p.get<double>("channel_snr_db");
    const auto mem = p.get<std::vector<int>>("equalizer_memory");
    if (mem.size() != 2 || mem[0] < 0 || mem[1] < 0 || std::max(mem[0], mem[1]) < 1)
      throw ConfigError("equalizer_memory must be [m1, m2] with max >= 1");
    m1_ = mem[0];
    m2_ = mem[1];
    ridge_ = p.get<double>("ridge");
    if (!(ridge_ >= 0.0)) throw ConfigError("ridge must be >= 0");
    adaptations_ = p.get<std::vector<std::string>>("adaptations");
    detail::require_subset(adaptations_, {"mmse", "moment"}, "adaptation");
    sample_rate_ = p.positive("sample_rate");
    const auto width = p.get<std::string>("width");
    if (width == "power-fraction") spectral_.width = WidthDefinition::power_fraction;
    else if (width == "rms") spectral_.width = WidthDefinition::rms;
    else throw ConfigError("width must be \"power-fraction\" or \"rms\"");
    spectral_.power_fraction = p.get<double>("power_fraction");
    if (!(spectral_.power_fraction > 0.0 && spectral_.power_fraction <= 1.0))
      throw ConfigError("power_fraction must lie in (0, 1]");
    spectral_.segment = p.get<std::size_t>("segment");
    ofdm_.subcarriers = p.get<int>("subcarriers");
    ofdm_.oversample = p.get<int>("oversample");
    ofdm_.cyclic_prefix = p.get<int>("cyclic_prefix");
    filter_.cutoff = p.get<double>("cutoff");
    filter_.taps = p.get<int>("taps");
    hybrid_.tone_frequency = p.get<double>("tone_frequency");
    hybrid_.snr_db = p.get<double>("hybrid_snr_db");
    const json& pr = p.raw().at("payload_rate");
    if (pr.is_null()) {
      // QAM-16 carries 4 bits per subcarrier per OFDM symbol (with prefix).
      const double symbol = 2.0 * ofdm_.oversample * ofdm_.subcarriers + ofdm_.cyclic_prefix;
      spectral_.payload_rate = 4.0 * ofdm_.subcarriers * sample_rate_ / symbol;
    } else if (pr.is_number() && pr.get<double>() > 0.0) {
      spectral_.payload_rate = pr.get<double>();
    } else {
      throw ConfigError("payload_rate must be positive or null");
    }
  }

  std::vector<ResultRecord> replicate(std::size_t n, std::uint64_t seed) const override {
    std::vector<ResultRecord> rows;
    for (std::size_t c = 0; c < signals_.size(); ++c) {
      const std::string& name = signals_[c];
      SignalSpec spec;
      spec.kind = name == "white-noise" ? SignalKind::iid_noise : signal_kind_from_string(name);
      spec.length = n;
      spec.sample_rate = sample_rate_;
      spec.seed = seed ^ mix_seed(2 * c + 1);
      spec.ofdm = ofdm_;
      spec.filter = filter_;
      spec.hybrid = hybrid_;
      spec.distribution = Normal{};

      std::vector<double> s, r;
      std::size_t skip = 0;
      double width_r = 0.0;
      detail::attempt(rows, name, "channel", [&](ResultRecord& rec) {
        s = generate(spec);
        r = volterra_predict(channel_, s);
        Rng noise_rng = make_rng(seed ^ mix_seed(2 * c + 2));
        double power = 0.0;
        for (double v : r) power += v * v;
        power /= static_cast<double>(r.size());
        std::normal_distribution<double> nd(0.0, std::sqrt(power / std::pow(10.0, snr_db_ / 10.0)));
        for (double& v : r) v += nd(noise_rng);
        s.erase(s.begin(), s.begin() + (channel_.memory() - 1));
        skip = static_cast<std::size_t>(std::max(m1_, m2_) - 1);
        const std::span<const double> r_aligned(r.data() + skip, r.size() - skip);
        const std::span<const double> s_aligned(s.data() + skip, s.size() - skip);
        const auto mr = spectral_metrics(r_aligned, sample_rate_, spectral_);
        const auto ms = spectral_metrics(s_aligned, sample_rate_, spectral_);
        width_r = mr.effective_width;
        rec.metrics = {{"width", mr.effective_width},
                       {"efficiency", mr.spectral_efficiency},
                       {"input_width", ms.effective_width},
                       {"ratio_to_input", mr.effective_width / ms.effective_width}};
      });
      if (!rows.back().ok()) continue;
      for (const auto& a : adaptations_) {
        detail::attempt(rows, name, a, [&](ResultRecord& rec) {
          const auto rep = a == "mmse" ? mmse_adapt(r, s, m1_, m2_, ridge_) : moment_adapt(r, s, m1_, m2_, std::nullopt, ridge_);
          const auto z = volterra_predict(rep.kernels, r);
          const auto mz = spectral_metrics(z, sample_rate_, spectral_);
          rec.estimates = detail::to_vector(kernels_to_coefficients(rep.kernels));
          rec.metrics = {{"width", mz.effective_width},
                         {"efficiency", mz.spectral_efficiency},
                         {"width_ratio", mz.effective_width / width_r},
                         {"efficiency_ratio", width_r / mz.effective_width},
                         {"residual_mse", rep.residual_mse},
                         {"condition", rep.condition},
                         {"g", rep.g_coefficient}};
        });
      }
    }
    return rows;
  }

  json metadata() const override {
    return {{"width_definition",
             spectral_.width == WidthDefinition::power_fraction
                 ? "smallest total bandwidth of Welch PSD bins (largest density first) holding power_fraction of power"
                 : "standard deviation of frequency under the normalized one-sided Welch PSD"},
            {"power_fraction", spectral_.power_fraction},
            {"psd", "Welch, Hann window, 50% overlap, segment length " + std::to_string(spectral_.segment)},
            {"payload_rate", spectral_.payload_rate},
            {"processing", "second-order Volterra post-equalizer adapted on (channel output -> clean input)"},
            {"width_ratio", "effective width of equalizer output / effective width of channel output"},
            {"note", "channel is a repository choice; ratios are direction checks, not reproductions"}};
  }

 private:
  std::vector<std::string> signals_;
  VolterraKernels channel_;
  double snr_db_ = 40.0;
  int m1_ = 3, m2_ = 3;
  double ridge_ = 0.0;
  std::vector<std::string> adaptations_;
  double sample_rate_ = 960e3;
  SpectralOptions spectral_;
  OfdmParams ofdm_;
  FilterParams filter_;
  HybridParams hybrid_;
};

// ------------------------------------------------------------------- cusum

/// False-alarm rate of the polynomial CUSUM under H0 over a horizon equal
/// to the sample size, and detection delay after a change.
class CusumScenario : public ScenarioRunner {
 public:
  CusumScenario(const Params& p, const ExperimentConfig& cfg) {
    pre_mean_ = p.get<double>("pre_mean");
    pre_sd_ = p.positive("pre_sd");
    shift_ = p.get<double>("shift");
    post_sd_ = p.positive("post_sd");
    degree_ = p.get<int>("degree");
    epsilons_ = p.get<std::vector<double>>("epsilons");
    if (epsilons_.empty()) throw ConfigError("epsilons must not be empty");
    const auto b = p.get<std::string>("bound");
    if (b == "chebyshev") bound_ = TailBound::chebyshev;
    else if (b == "vysochanskij-petunin") bound_ = TailBound::vysochanskij_petunin;
    else throw ConfigError("bound must be \"chebyshev\" or \"vysochanskij-petunin\"");
    change_point_ = p.get<std::size_t>("change_point");
    delay_stream_ = p.get<std::size_t>("delay_stream");
    const LocatedCumulants pre{pre_mean_, CumulantSet::gaussian(pre_sd_ * pre_sd_)};
    const LocatedCumulants post{pre_mean_ + shift_ * pre_sd_, CumulantSet::gaussian(post_sd_ * post_sd_)};
    try {
      for (auto horizon : cfg.sample_sizes)
        for (double eps : epsilons_) detectors_[{horizon, eps}] = make_detector(pre, post, degree_, eps, horizon, bound_);
    } catch (const Error& e) {
      throw ConfigError(std::string("cusum-far detector: ") + e.what());
    }
  }

  std::vector<ResultRecord> replicate(std::size_t n, std::uint64_t seed) const override {
    std::vector<ResultRecord> rows;
    Rng rng = detail::case_rng(seed, 0);
    std::normal_distribution<double> pre(pre_mean_, pre_sd_);
    std::vector<double> h0(n);
    for (double& v : h0) v = pre(rng);
    for (double eps : epsilons_) {
      detail::attempt(rows, "H0", label(eps), [&](ResultRecord& r) {
        const auto& d = detectors_.at({n, eps});
        const auto rec = run_detector(d, h0);
        double peak = 0.0;
        for (double t : rec.trace) peak = std::max(peak, t);
        r.metrics = {{"fired", rec.fired ? 1.0 : 0.0}, {"threshold", d.threshold}, {"max_T", peak}};
      });
    }
    if (delay_stream_ > 0) {
      Rng rng1 = detail::case_rng(seed, 1);
      std::normal_distribution<double> post(pre_mean_ + shift_ * pre_sd_, post_sd_);
      std::vector<double> h1(change_point_ + delay_stream_);
      for (std::size_t i = 0; i < h1.size(); ++i) h1[i] = i < change_point_ ? pre(rng1) : post(rng1);
      for (double eps : epsilons_) {
        detail::attempt(rows, "H1", label(eps), [&](ResultRecord& r) {
          const auto& d = detectors_.at({n, eps});
          const auto rec = run_detector(d, h1);
          const bool early = rec.tau && *rec.tau <= change_point_;
          const bool detected = rec.tau && !early;
          r.metrics = {{"detected", detected ? 1.0 : 0.0},
                       {"false_alarm", early ? 1.0 : 0.0},
                       {"delay", detected ? static_cast<double>(*rec.tau - change_point_) : std::nan("")},
                       {"threshold", d.threshold}};
        });
      }
    }
    return rows;
  }

  json metadata() const override {
    json th = json::array();
    for (const auto& [key, d] : detectors_)
      th.push_back({{"horizon", key.first},
                    {"epsilon", key.second},
                    {"threshold", d.threshold},
                    {"score_pre_mean", d.score.pre_mean},
                    {"score_pre_variance", d.score.pre_variance},
                    {"score_post_mean", d.score.post_mean}});
    return {{"far_control", "per-horizon: P(T_n > h for some n <= horizon | H0) <= epsilon (union bound)"},
            {"bound", to_string(bound_)},
            {"cusum", "reflected, T_n = max(0, T_{n-1} + score)"},
            {"detectors", th},
            {"delay_definition", "tau - change_point, tau the 1-based first crossing after the change"}};
  }

 private:
  static std::string label(double eps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "eps=%g", eps);
    return buf;
  }

  double pre_mean_ = 0.0, pre_sd_ = 1.0, shift_ = 3.0, post_sd_ = 1.0;
  int degree_ = 1;
  std::vector<double> epsilons_;
  TailBound bound_ = TailBound::chebyshev;
  std::size_t change_point_ = 500, delay_stream_ = 0;
  std::map<std::pair<std::size_t, double>, CusumDetector> detectors_;
};

// ---------------------------------------------------------------- dispatch

class DispatchScenario : public ScenarioRunner {
 public:
  explicit DispatchScenario(const Params& p) {
    cases_ = detail::noise_cases(p, "distributions");
    for (const auto& c : cases_) {
      const auto e = c.descriptor.value("expected", std::string());
      if (e != "OLS" && e != "PMM2" && e != "PMM3")
        throw ConfigError("distribution '" + c.label + "' needs expected in {OLS, PMM2, PMM3}");
      expected_.push_back(e);
    }
    opt_.delta = p.get<double>("delta");
  }

  std::vector<ResultRecord> replicate(std::size_t n, std::uint64_t seed) const override {
    std::vector<ResultRecord> rows;
    for (std::size_t c = 0; c < cases_.size(); ++c) {
      Rng rng = detail::case_rng(seed, c);
      const auto sample = draw_n(cases_[c].dist, n, rng);
      detail::attempt(rows, cases_[c].label, "dispatch", [&](ResultRecord& r) {
        const auto d = pmm_dispatch(sample, opt_);
        r.metrics = {{"correct", to_string(d.method) == expected_[c] ? 1.0 : 0.0},
                     {"method", static_cast<double>(d.method)},
                     {"gamma3", d.gamma3},
                     {"gamma4", d.gamma4},
                     {"g2", d.g2},
                     {"g3", d.g3}};
      });
    }
    return rows;
  }

  json metadata() const override {
    json cases = json::array();
    for (std::size_t c = 0; c < cases_.size(); ++c) cases.push_back({{"case", cases_[c].label}, {"expected", expected_[c]}});
    return {{"cases", cases}, {"method_codes", {{"0", "OLS"}, {"1", "PMM2"}, {"2", "PMM3"}}}, {"delta", opt_.delta}};
  }

 private:
  std::vector<detail::NoiseCase> cases_;
  std::vector<std::string> expected_;
  DispatchOptions opt_;
};

// ---------------------------------------------------------------- registry

[[nodiscard]] inline const std::vector<ScenarioInfo>& scenarios() {
  static const std::vector<ScenarioInfo> all = [] {
    std::vector<ScenarioInfo> v;
    v.push_back({"g2-validation",
                 "location: variance of PMM2 vs sample mean against the predicted g2",
                 json{{"distributions", json::array({{{"family", "chi-square"}, {"params", {3}}}})},
                      {"estimators", {"mean", "PMM2"}},
                      {"known_cumulants", true}},
                 [](const Params& p, const ExperimentConfig&) { return std::make_unique<LocationScenario>(p); }});
    v.push_back({"pmm-vs-sls",
                 "exponential regression with chi-square errors: OLS, PMM2 and SLS variants",
                 json{{"model", "exponential"},
                      {"theta", {2.0, 0.5}},
                      {"x_range", {0.0, 1.0}},
                      {"noise_sd", 0.25},
                      {"noises", json::array({{{"family", "chi-square"}, {"params", {3}}}})},
                      {"estimators", {"OLS", "PMM2", "SLS", "SLS-opt"}},
                      {"omega", "auto"}},
                 [](const Params& p, const ExperimentConfig&) { return std::make_unique<RegressionScenario>(p); }});
    v.push_back({"regression-gain",
                 "linear regression: PMM2 vs OLS across error distributions",
                 json{{"model", "linear"},
                      {"theta", {1.0, 2.0}},
                      {"x_range", {0.0, 1.0}},
                      {"noise_sd", 1.0},
                      {"noises", json::array({{{"family", "normal"}, {"params", {0, 1}}},
                                              {{"family", "chi-square"}, {"params", {3}}},
                                              {{"family", "gamma"}, {"params", {2, 1}}},
                                              {{"family", "lognormal"}, {"params", {0, 0.5}}},
                                              {{"family", "uniform"}, {"params", {-1, 1}}}})},
                      {"estimators", {"OLS", "PMM2"}},
                      {"omega", "auto"}},
                 [](const Params& p, const ExperimentConfig&) { return std::make_unique<RegressionScenario>(p); }});
    v.push_back({"volterra-spectral",
                 "effective spectral width after Volterra post-equalization of a quadratic memory channel",
                 json{{"signals", {"ofdm", "filtered-noise", "hybrid", "white-noise"}},
                      {"channel", {{"h0", 0.0}, {"h1", {1.0, 0.25, -0.1}}, {"h2", {{0.1, 0.05}, {0.05, 0.03}}}}},
                      {"channel_snr_db", 40.0},
                      {"equalizer_memory", {3, 3}},
                      {"ridge", 0.0},
                      {"adaptations", {"mmse", "moment"}},
                      {"sample_rate", 960e3},
                      {"width", "power-fraction"},
                      {"power_fraction", 0.99},
                      {"segment", 256},
                      {"payload_rate", nullptr},
                      {"subcarriers", 64},
                      {"oversample", 2},
                      {"cyclic_prefix", 16},
                      {"cutoff", 0.4},
                      {"taps", 101},
                      {"tone_frequency", 0.05},
                      {"hybrid_snr_db", 10.0}},
                 [](const Params& p, const ExperimentConfig&) { return std::make_unique<SpectralScenario>(p); }});
    v.push_back({"cusum-far",
                 "polynomial CUSUM: false alarms over the horizon (= sample size) and detection delay",
                 json{{"pre_mean", 0.0},
                      {"pre_sd", 1.0},
                      {"shift", 3.0},
                      {"post_sd", 1.0},
                      {"degree", 1},
                      {"epsilons", {0.2, 0.05, 0.01}},
                      {"bound", "chebyshev"},
                      {"change_point", 500},
                      {"delay_stream", 100000}},
                 [](const Params& p, const ExperimentConfig& c) { return std::make_unique<CusumScenario>(p, c); }});
    v.push_back({"dispatch-accuracy",
                 "automatic OLS/PMM2/PMM3 selection from sample shape",
                 json{{"distributions",
                       json::array({{{"family", "normal"}, {"params", {0, 1}}, {"expected", "OLS"}},
                                    {{"family", "chi-square"}, {"params", {3}}, {"expected", "PMM2"}},
                                    {{"family", "uniform"}, {"params", {-1, 1}}, {"expected", "PMM3"}}})},
                      {"delta", 0.02}},
                 [](const Params& p, const ExperimentConfig&) { return std::make_unique<DispatchScenario>(p); }});
    return v;
  }();
  return all;
}

[[nodiscard]] inline const ScenarioInfo& find_scenario(const std::string& name) {
  for (const auto& s : scenarios())
    if (s.name == name) return s;
  throw ConfigError("unknown scenario '" + name + "'");
}

}  // namespace polyest::harness
