#pragma once

// Polynomial CUSUM: a moment-contrast score built from the pre- and
// post-change cumulants, a reflected cumulative sum, and a distribution-free
// threshold from Chebyshev or Vysochanskij-Petunin tail bounds over a
// finite horizon.

#include <polyest/errors.hpp>
#include <polyest/moments.hpp>
#include <polyest/stochpoly.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace polyest {

/// Lambda(x) = sum_i h_i (phi_i(x) - Psi_i^pre) - D/2 with phi_i(x) =
/// (x - center)^i, center = pre-change mean, h = F_pre^{-1} (Psi^post -
/// Psi^pre) and D = h^T (Psi^post - Psi^pre). Then E_pre = -D/2,
/// E_post = +D/2 and Var_pre = D.
struct PolynomialScore {
  int degree = 1;
  double center = 0.0;
  Eigen::VectorXd h;
  Eigen::VectorXd psi_pre;
  double offset = 0.0;
  double pre_mean = 0.0;
  double pre_variance = 0.0;
  double post_mean = 0.0;
  double post_variance = 0.0;

  [[nodiscard]] double operator()(double x) const {
    const double d = x - center;
    double p = d;
    double v = -offset;
    for (int i = 0; i < degree; ++i, p *= d) v += h(i) * (p - psi_pre(i));
    return v;
  }
};

namespace detail {

/// E[(x - center)^i], i = 1..order, for a regime with the given mean/cumulants.
inline Eigen::VectorXd shifted_moments(const LocatedCumulants& regime, double center, int order) {
  const auto a = raw_moments_from_cumulants(regime.cumulants, regime.mean - center, order);
  return Eigen::Map<const Eigen::VectorXd>(a.values().data(), order);
}

inline CorrelantMatrix regime_correlants(const LocatedCumulants& regime, double center, int degree) {
  return compute_correlant_matrix(BasisFamily::power(degree),
                                  raw_moments_from_cumulants(regime.cumulants, regime.mean - center, 2 * degree));
}

}  // namespace detail

[[nodiscard]] inline PolynomialScore build_polynomial_score(const LocatedCumulants& pre, const LocatedCumulants& post,
                                                            int degree) {
  if (degree != 1 && degree != 2) throw InvalidShape("score degree must be 1 or 2");
  if (pre.cumulants.order() < 2 * degree || post.cumulants.order() < 2 * degree)
    throw OrderUnavailable("degree-" + std::to_string(degree) + " score needs cumulants up to c" +
                           std::to_string(2 * degree) + " for both regimes");
  PolynomialScore s;
  s.degree = degree;
  s.center = pre.mean;
  s.psi_pre = detail::shifted_moments(pre, s.center, degree);
  const Eigen::VectorXd psi_post = detail::shifted_moments(post, s.center, degree);
  const Eigen::VectorXd delta = psi_post - s.psi_pre;
  const double scale = s.psi_pre.cwiseAbs().sum() + psi_post.cwiseAbs().sum();
  if (!(delta.cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, scale)))
    throw IndistinguishableRegimes("pre- and post-change basis means coincide");
  const auto f_pre = detail::regime_correlants(pre, s.center, degree);
  detail::require_nondegenerate(f_pre);
  s.h = f_pre.F.ldlt().solve(delta);
  const double d = s.h.dot(delta);
  if (!(d > 0.0)) throw IndistinguishableRegimes("moment contrast vanishes");
  s.offset = 0.5 * d;
  s.pre_mean = -0.5 * d;
  s.post_mean = 0.5 * d;
  s.pre_variance = polynomial_variance(StochasticPolynomial(0.0, s.h, BasisFamily::power(degree)), f_pre);
  const auto f_post = detail::regime_correlants(post, s.center, degree);
  s.post_variance = polynomial_variance(StochasticPolynomial(0.0, s.h, BasisFamily::power(degree)), f_post);
  return s;
}

enum class TailBound { chebyshev, vysochanskij_petunin };

[[nodiscard]] inline std::string to_string(TailBound b) {
  return b == TailBound::chebyshev ? "chebyshev" : "vysochanskij-petunin";
}

/// Upper bound on P(|Z - E Z| >= t) for a variable with variance `var`;
/// the Vysochanskij-Petunin form assumes a unimodal law.
[[nodiscard]] inline double tail_bound(double var, double t, TailBound bound) {
  if (!(t > 0.0)) return 1.0;
  const double r = var / (t * t);
  if (bound == TailBound::chebyshev) return std::min(1.0, r);
  if (t * t >= (8.0 / 3.0) * var) return (4.0 / 9.0) * r;
  return std::min(1.0, (4.0 / 3.0) * r - 1.0 / 3.0);
}

/// Union bound on the probability that the reflected CUSUM of iid scores
/// with mean `mean` < 0 and variance `var` exceeds h within `horizon`
/// samples: T_n > h iff some window sum S_n - S_k exceeds h, so
///   P <= sum_{m=1}^{H} (H - m + 1) tail(var m, h + |mean| m).
[[nodiscard]] inline double false_alarm_bound(double mean, double var, double h, std::size_t horizon,
                                              TailBound bound) {
  double total = 0.0;
  const double drift = -mean;
  for (std::size_t m = 1; m <= horizon; ++m) {
    const double md = static_cast<double>(m);
    total += static_cast<double>(horizon - m + 1) * tail_bound(var * md, h + drift * md, bound);
    if (total >= 1.0) return 1.0;
  }
  return total;
}

struct ScoreStats {
  double mean = 0.0;
  double variance = 0.0;
};

[[nodiscard]] inline ScoreStats pre_change_stats(const PolynomialScore& s) { return {s.pre_mean, s.pre_variance}; }

/// Smallest h (to bisection precision) with false_alarm_bound <= epsilon.
[[nodiscard]] inline double calibrate_threshold(const ScoreStats& pre, double epsilon, std::size_t horizon,
                                                TailBound bound = TailBound::chebyshev) {
  if (!(pre.mean < 0.0)) throw DriftViolation("pre-change score mean must be negative");
  if (!std::isfinite(pre.variance) || pre.variance < 0.0) throw InvalidShape("score variance must be finite");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidShape("epsilon must lie in (0, 1)");
  if (horizon == 0) throw InvalidShape("horizon must be >= 1");
  if (pre.variance == 0.0) return std::numeric_limits<double>::min();
  const auto b = [&](double h) { return false_alarm_bound(pre.mean, pre.variance, h, horizon, bound); };
  double hi = std::sqrt(pre.variance);
  while (b(hi) > epsilon) {
    hi *= 2.0;
    if (!std::isfinite(hi)) throw InvalidShape("threshold search diverged");
  }
  double lo = 0.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (b(mid) > epsilon ? lo : hi) = mid;
  }
  return hi;
}

struct CusumDetector {
  PolynomialScore score;
  double threshold = 0.0;
  double epsilon = 0.0;
  std::size_t horizon = 0;
  TailBound bound = TailBound::chebyshev;
};

/// Score plus calibrated threshold for a per-horizon false-alarm target.
[[nodiscard]] inline CusumDetector make_detector(const LocatedCumulants& pre, const LocatedCumulants& post,
                                                 int degree, double epsilon, std::size_t horizon,
                                                 TailBound bound = TailBound::chebyshev) {
  CusumDetector d;
  d.score = build_polynomial_score(pre, post, degree);
  d.threshold = calibrate_threshold(pre_change_stats(d.score), epsilon, horizon, bound);
  d.epsilon = epsilon;
  d.horizon = horizon;
  d.bound = bound;
  return d;
}

struct DetectionRecord {
  bool fired = false;
  /// 1-based sample count at the first crossing T_n > h.
  std::optional<std::size_t> tau;
  std::vector<double> trace;
};

/// T_n = max(0, T_{n-1} + score_n) over precomputed scores.
[[nodiscard]] inline DetectionRecord run_cusum(std::span<const double> scores, double threshold) {
  DetectionRecord rec;
  rec.trace.resize(scores.size());
  double t = 0.0;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    t = std::max(0.0, t + scores[n]);
    rec.trace[n] = t;
    if (!rec.fired && t > threshold) {
      rec.fired = true;
      rec.tau = n + 1;
    }
  }
  return rec;
}

[[nodiscard]] inline DetectionRecord run_detector(const CusumDetector& d, std::span<const double> stream) {
  std::vector<double> scores(stream.size());
  for (std::size_t n = 0; n < stream.size(); ++n) scores[n] = d.score(stream[n]);
  return run_cusum(scores, d.threshold);
}

/// Writes "n,T_n,fired" rows (n 1-based; fired = 1 from tau onward).
inline void write_trace_csv(const std::string& path, const DetectionRecord& rec) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "n,T_n,fired\n";
  char buf[64];
  for (std::size_t n = 0; n < rec.trace.size(); ++n) {
    const bool fired = rec.tau && n + 1 >= *rec.tau;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d\n", n + 1, rec.trace[n], fired ? 1 : 0);
    out << buf;
  }
  if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace polyest
