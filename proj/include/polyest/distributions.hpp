#pragma once

// Parametric families used as noise models and test oracles: descriptors,
// exact population cumulants, and seeded sampling.

#include <polyest/errors.hpp>
#include <polyest/moments.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace polyest {

struct Normal {
  double mean = 0.0;
  double sd = 1.0;
};
struct ChiSquare {
  double dof = 1.0;
};
struct GammaDist {
  double shape = 1.0;
  double scale = 1.0;
};
struct LogNormal {
  double mu = 0.0;
  double sigma = 1.0;
};
struct Uniform {
  double a = 0.0;
  double b = 1.0;
};
/// Density proportional to exp(-|(x - location)/scale|^beta).
struct ExponentialPower {
  double beta = 2.0;
  double location = 0.0;
  double scale = 1.0;
};

using Distribution = std::variant<Normal, ChiSquare, GammaDist, LogNormal, Uniform, ExponentialPower>;

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw UnsupportedDistribution(what);
}

inline void validate(const Distribution& d) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Normal>) require(p.sd > 0.0, "normal sd must be positive");
        if constexpr (std::is_same_v<T, ChiSquare>) require(p.dof > 0.0, "chi-square dof must be positive");
        if constexpr (std::is_same_v<T, GammaDist>)
          require(p.shape > 0.0 && p.scale > 0.0, "gamma shape and scale must be positive");
        if constexpr (std::is_same_v<T, LogNormal>) require(p.sigma > 0.0, "lognormal sigma must be positive");
        if constexpr (std::is_same_v<T, Uniform>) require(p.b > p.a, "uniform needs a < b");
        if constexpr (std::is_same_v<T, ExponentialPower>)
          require(p.beta > 0.0 && p.scale > 0.0, "exponential-power beta and scale must be positive");
      },
      d);
}

// Gamma-family cumulants c_r = (r-1)! k theta^r.
inline LocatedCumulants gamma_cumulants(double shape, double scale) {
  std::vector<double> c;
  double fact = 1.0;
  for (int r = 2; r <= kMaxCumulantOrder; ++r) {
    fact *= (r - 1);
    c.push_back(fact * shape * std::pow(scale, r));
  }
  return {shape * scale, CumulantSet(std::move(c))};
}

inline LocatedCumulants symmetric_from_even_central(double mean, double mu2, double mu4, double mu6) {
  const double mu[] = {mu2, 0.0, mu4, 0.0, mu6};
  return {mean, cumulants_from_central_moments(mu)};
}

}  // namespace detail

/// Exact population mean and cumulants c2..c6 of a supported family.
[[nodiscard]] inline LocatedCumulants analytic_cumulants(const Distribution& dist) {
  detail::validate(dist);
  return std::visit(
      [](const auto& p) -> LocatedCumulants {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Normal>) {
          return {p.mean, CumulantSet({p.sd * p.sd, 0.0, 0.0, 0.0, 0.0})};
        } else if constexpr (std::is_same_v<T, ChiSquare>) {
          return detail::gamma_cumulants(p.dof / 2.0, 2.0);
        } else if constexpr (std::is_same_v<T, GammaDist>) {
          return detail::gamma_cumulants(p.shape, p.scale);
        } else if constexpr (std::is_same_v<T, LogNormal>) {
          std::vector<double> alpha;
          for (int r = 1; r <= kMaxCumulantOrder; ++r)
            alpha.push_back(std::exp(r * p.mu + 0.5 * r * r * p.sigma * p.sigma));
          return cumulants_from_raw_moments(InitialMomentVector(std::move(alpha)));
        } else if constexpr (std::is_same_v<T, Uniform>) {
          // Central moments of a width-w uniform: w^r / ((r+1) 2^r) for even r.
          const double w = p.b - p.a;
          return detail::symmetric_from_even_central(0.5 * (p.a + p.b), w * w / 12.0, std::pow(w, 4) / 80.0,
                                                     std::pow(w, 6) / 448.0);
        } else {
          // E|X|^r = scale^r Gamma((r+1)/beta) / Gamma(1/beta).
          const double g1 = std::lgamma(1.0 / p.beta);
          const auto abs_moment = [&](int r) {
            return std::pow(p.scale, r) * std::exp(std::lgamma((r + 1.0) / p.beta) - g1);
          };
          return detail::symmetric_from_even_central(p.location, abs_moment(2), abs_moment(4), abs_moment(6));
        }
      },
      dist);
}

/// Factory by family name, e.g. ("chi-square", {3}). Parameter order follows
/// the struct field order; omitted trailing parameters take the defaults.
[[nodiscard]] inline Distribution make_distribution(const std::string& family, const std::vector<double>& p) {
  const auto at = [&](std::size_t i, double dflt) { return i < p.size() ? p[i] : dflt; };
  Distribution d;
  if (family == "normal" || family == "gaussian")
    d = Normal{at(0, 0.0), at(1, 1.0)};
  else if (family == "chi-square" || family == "chisq" || family == "chi2")
    d = ChiSquare{at(0, 1.0)};
  else if (family == "gamma")
    d = GammaDist{at(0, 1.0), at(1, 1.0)};
  else if (family == "lognormal")
    d = LogNormal{at(0, 0.0), at(1, 1.0)};
  else if (family == "uniform")
    d = Uniform{at(0, 0.0), at(1, 1.0)};
  else if (family == "exponential-power" || family == "exppow")
    d = ExponentialPower{at(0, 2.0), at(1, 0.0), at(2, 1.0)};
  else
    throw UnsupportedDistribution("unknown family '" + family + "'");
  detail::validate(d);
  return d;
}

[[nodiscard]] inline std::string family_name(const Distribution& d) {
  static const char* const names[] = {"normal", "chi-square", "gamma", "lognormal", "uniform", "exponential-power"};
  return names[d.index()];
}

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; turns structured seeds (base ^ replicate) into
/// well-mixed generator seeds.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

[[nodiscard]] inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

/// One draw from `dist`.
[[nodiscard]] inline double draw(const Distribution& dist, Rng& rng) {
  return std::visit(
      [&rng](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Normal>) {
          return std::normal_distribution<double>(p.mean, p.sd)(rng);
        } else if constexpr (std::is_same_v<T, ChiSquare>) {
          return std::chi_squared_distribution<double>(p.dof)(rng);
        } else if constexpr (std::is_same_v<T, GammaDist>) {
          return std::gamma_distribution<double>(p.shape, p.scale)(rng);
        } else if constexpr (std::is_same_v<T, LogNormal>) {
          return std::lognormal_distribution<double>(p.mu, p.sigma)(rng);
        } else if constexpr (std::is_same_v<T, Uniform>) {
          return std::uniform_real_distribution<double>(p.a, p.b)(rng);
        } else {
          // |Z|^beta ~ Gamma(1/beta, 1) with a random sign.
          const double g = std::gamma_distribution<double>(1.0 / p.beta, 1.0)(rng);
          const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
          return p.location + sign * p.scale * std::pow(g, 1.0 / p.beta);
        }
      },
      dist);
}

[[nodiscard]] inline std::vector<double> draw_n(const Distribution& dist, std::size_t n, Rng& rng) {
  detail::validate(dist);
  std::vector<double> out(n);
  for (auto& v : out) v = draw(dist, rng);
  return out;
}

/// n draws shifted to zero mean and multiplied by `scale`.
[[nodiscard]] inline std::vector<double> draw_centered(const Distribution& dist, std::size_t n, Rng& rng,
                                                       double scale = 1.0) {
  const double mu = analytic_cumulants(dist).mean;
  auto out = draw_n(dist, n, rng);
  for (auto& v : out) v = scale * (v - mu);
  return out;
}

}  // namespace polyest
