#pragma once

// Sample and population moments, cumulants and shape coefficients up to
// order six.

#include <polyest/errors.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace polyest {

inline constexpr int kMaxCumulantOrder = 6;

/// Slack allowed on the realizability bound gamma4 >= gamma3^2 - 2.
inline constexpr double kRealizabilityTolerance = 1e-9;

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace detail

/// Cumulants c2..c_order of a scalar distribution (the mean is kept apart,
/// see LocatedCumulants). Orders above order() are unavailable and raise
/// OrderUnavailable on access.
class CumulantSet {
 public:
  /// `cumulants` holds c2, c3, ... in that order; 1 to 5 entries.
  explicit CumulantSet(std::vector<double> cumulants) : c_(std::move(cumulants)) {
    if (c_.empty() || c_.size() > kMaxCumulantOrder - 1)
      throw InvalidShape("cumulant set needs between 1 and 5 entries (c2..c6)");
    for (double v : c_)
      if (!std::isfinite(v)) throw InvalidShape("non-finite cumulant");
    if (c_[0] < 0.0) throw InvalidShape("negative variance c2");
    if (order() >= 4 && c_[0] > 0.0) {
      const double g3 = gamma3();
      const double g4 = gamma4();
      if (g4 < g3 * g3 - 2.0 - kRealizabilityTolerance)
        throw InvalidShape("gamma4 = " + std::to_string(g4) + " violates gamma4 >= gamma3^2 - 2 (gamma3 = " +
                           std::to_string(g3) + ")");
    }
  }

  static CumulantSet gaussian(double variance, int order = 4) {
    std::vector<double> c(static_cast<std::size_t>(order - 1), 0.0);
    c[0] = variance;
    return CumulantSet(std::move(c));
  }

  /// Builds c2, c3, c4 from variance and the dimensionless gamma3, gamma4.
  static CumulantSet from_shape(double variance, double gamma3, double gamma4) {
    const double s = std::sqrt(variance);
    return CumulantSet({variance, gamma3 * s * s * s, gamma4 * variance * variance});
  }

  [[nodiscard]] int order() const { return static_cast<int>(c_.size()) + 1; }

  [[nodiscard]] double cumulant(int r) const {
    if (r < 2 || r > order())
      throw OrderUnavailable("cumulant c" + std::to_string(r) + " requested, set holds up to c" +
                             std::to_string(order()));
    return c_[static_cast<std::size_t>(r - 2)];
  }

  [[nodiscard]] double c2() const { return c_[0]; }
  [[nodiscard]] double c3() const { return cumulant(3); }
  [[nodiscard]] double c4() const { return cumulant(4); }
  [[nodiscard]] double c5() const { return cumulant(5); }
  [[nodiscard]] double c6() const { return cumulant(6); }

  /// Normalized cumulant c_r / c2^(r/2). NaN when c2 == 0.
  [[nodiscard]] double gamma(int r) const {
    const double v = cumulant(r);
    if (c_[0] <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return v / std::pow(c_[0], 0.5 * r);
  }
  [[nodiscard]] double gamma3() const { return gamma(3); }
  [[nodiscard]] double gamma4() const { return gamma(4); }

  /// Copy with c3 and c5 (when present) zeroed: the symmetric perforation.
  [[nodiscard]] CumulantSet symmetrized() const {
    auto c = c_;
    if (c.size() >= 2) c[1] = 0.0;
    if (c.size() >= 4) c[3] = 0.0;
    return CumulantSet(std::move(c));
  }

  [[nodiscard]] const std::vector<double>& values() const { return c_; }

 private:
  std::vector<double> c_;
};

/// A distribution's mean together with its cumulants.
struct LocatedCumulants {
  double mean = 0.0;
  CumulantSet cumulants = CumulantSet::gaussian(1.0);
};

/// Raw (initial) moments alpha_1..alpha_order, alpha_i = E{xi^i}.
class InitialMomentVector {
 public:
  explicit InitialMomentVector(std::vector<double> alpha) : alpha_(std::move(alpha)) {
    if (alpha_.empty()) throw InvalidShape("empty moment vector");
    for (double v : alpha_)
      if (!std::isfinite(v)) throw InvalidShape("non-finite raw moment");
    if (alpha_.size() >= 2) {
      const double a1 = alpha_[0];
      const double slack = 1e-12 * std::max(1.0, std::abs(alpha_[1]));
      if (alpha_[1] < a1 * a1 - slack) throw InvalidShape("alpha2 < alpha1^2 violates Cauchy-Schwarz");
    }
  }

  [[nodiscard]] int order() const { return static_cast<int>(alpha_.size()); }

  /// 1-based access; alpha(0) == 1.
  [[nodiscard]] double alpha(int i) const {
    if (i == 0) return 1.0;
    if (i < 0 || i > order())
      throw OrderUnavailable("raw moment alpha" + std::to_string(i) + " requested, vector holds up to alpha" +
                             std::to_string(order()));
    return alpha_[static_cast<std::size_t>(i - 1)];
  }

  [[nodiscard]] const std::vector<double>& values() const { return alpha_; }

 private:
  std::vector<double> alpha_;
};

/// Moment-cumulant recursion alpha_n = sum_{k=1..n} C(n-1,k-1) kappa_k alpha_{n-k}
/// with kappa_1 = mean.
[[nodiscard]] inline InitialMomentVector raw_moments_from_cumulants(const CumulantSet& c, double mean, int order) {
  if (order < 1) throw OrderUnavailable("order must be >= 1");
  if (order > c.order())
    throw OrderUnavailable("raw moment order " + std::to_string(order) + " needs cumulants up to c" +
                           std::to_string(order) + ", set holds up to c" + std::to_string(c.order()));
  std::vector<double> kappa(static_cast<std::size_t>(order) + 1, 0.0);
  kappa[1] = mean;
  for (int r = 2; r <= order; ++r) kappa[r] = c.cumulant(r);
  std::vector<double> alpha(static_cast<std::size_t>(order) + 1, 0.0);
  alpha[0] = 1.0;
  for (int n = 1; n <= order; ++n) {
    double s = 0.0;
    for (int k = 1; k <= n; ++k) s += detail::binomial(n - 1, k - 1) * kappa[k] * alpha[n - k];
    alpha[n] = s;
  }
  return InitialMomentVector(std::vector<double>(alpha.begin() + 1, alpha.end()));
}

[[nodiscard]] inline InitialMomentVector raw_moments_from_cumulants(const LocatedCumulants& lc, int order) {
  return raw_moments_from_cumulants(lc.cumulants, lc.mean, order);
}

/// Inverse of raw_moments_from_cumulants; needs alpha_1..alpha_r with r >= 2.
[[nodiscard]] inline LocatedCumulants cumulants_from_raw_moments(const InitialMomentVector& a) {
  const int order = std::min(a.order(), kMaxCumulantOrder);
  if (order < 2) throw OrderUnavailable("need at least two raw moments");
  std::vector<double> kappa(static_cast<std::size_t>(order) + 1, 0.0);
  for (int n = 1; n <= order; ++n) {
    double s = a.alpha(n);
    for (int k = 1; k < n; ++k) s -= detail::binomial(n - 1, k - 1) * kappa[k] * a.alpha(n - k);
    kappa[n] = s;
  }
  // Rounding can leave a tiny negative variance for near point masses.
  if (kappa[2] < 0.0 && kappa[2] > -1e-12 * std::max(1.0, a.alpha(2))) kappa[2] = 0.0;
  return {kappa[1], CumulantSet(std::vector<double>(kappa.begin() + 2, kappa.end()))};
}

/// Cumulants from central moments mu_2..mu_order (mu_1 = 0 implied).
[[nodiscard]] inline CumulantSet cumulants_from_central_moments(std::span<const double> mu) {
  std::vector<double> alpha;
  alpha.reserve(mu.size() + 1);
  alpha.push_back(0.0);
  alpha.insert(alpha.end(), mu.begin(), mu.end());
  return cumulants_from_raw_moments(InitialMomentVector(std::move(alpha))).cumulants;
}

[[nodiscard]] inline double sample_mean(std::span<const double> x) {
  if (x.empty()) throw InsufficientData("empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Bias-corrected cumulant estimates: k-statistics for orders 2..4 and
/// plug-in central-moment cumulants for orders 5 and 6.
[[nodiscard]] inline LocatedCumulants sample_shape(std::span<const double> x, int max_order = 4) {
  if (max_order < 2 || max_order > kMaxCumulantOrder)
    throw OrderUnavailable("max_order must lie in 2..6");
  const std::size_t n_obs = x.size();
  if (n_obs < static_cast<std::size_t>(max_order) + 1)
    throw InsufficientData("need at least " + std::to_string(max_order + 1) + " observations, got " +
                           std::to_string(n_obs));
  const double mean = sample_mean(x);
  std::array<double, kMaxCumulantOrder + 1> m{};  // plug-in central moments
  for (double v : x) {
    const double d = v - mean;
    double p = d * d;
    for (int r = 2; r <= max_order; ++r) {
      m[r] += p;
      p *= d;
    }
  }
  const double n = static_cast<double>(n_obs);
  for (int r = 2; r <= max_order; ++r) m[r] /= n;
  if (!(m[2] > std::numeric_limits<double>::min()) ||
      m[2] <= 16.0 * std::numeric_limits<double>::epsilon() * std::numeric_limits<double>::epsilon() * mean * mean)
    throw DegenerateSample("sample variance is zero");

  std::vector<double> c;
  c.push_back(n / (n - 1.0) * m[2]);
  if (max_order >= 3) c.push_back(n * n / ((n - 1.0) * (n - 2.0)) * m[3]);
  if (max_order >= 4)
    c.push_back(n * n * ((n + 1.0) * m[4] - 3.0 * (n - 1.0) * m[2] * m[2]) / ((n - 1.0) * (n - 2.0) * (n - 3.0)));
  if (max_order >= 5) c.push_back(m[5] - 10.0 * m[3] * m[2]);
  if (max_order >= 6) c.push_back(m[6] - 15.0 * m[4] * m[2] - 10.0 * m[3] * m[3] + 30.0 * m[2] * m[2] * m[2]);
  return {mean, CumulantSet(std::move(c))};
}

[[nodiscard]] inline CumulantSet sample_cumulants(std::span<const double> x, int max_order = 4) {
  return sample_shape(x, max_order).cumulants;
}

/// Empirical raw moments (1/N) sum x^i for i = 1..order.
[[nodiscard]] inline std::vector<double> empirical_power_means(std::span<const double> x, int order) {
  if (x.empty()) throw InsufficientData("empty sample");
  std::vector<double> m(static_cast<std::size_t>(order), 0.0);
  for (double v : x) {
    double p = v;
    for (int i = 0; i < order; ++i) {
      m[static_cast<std::size_t>(i)] += p;
      p *= v;
    }
  }
  for (double& v : m) v /= static_cast<double>(x.size());
  return m;
}

}  // namespace polyest
