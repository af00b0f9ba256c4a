#pragma once

// Polynomial maximization method (PMM): optimal polynomial coefficients
// from F_S(theta) h = dPsi/dtheta, the stationarity system of the expected
// stochastic polynomial, location and regression estimators, predicted
// variance-reduction coefficients, and automatic method selection.

#include <polyest/errors.hpp>
#include <polyest/moments.hpp>
#include <polyest/regression.hpp>
#include <polyest/solvers.hpp>
#include <polyest/stochpoly.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace polyest {

/// A parametric model theta -> basis means Psi(theta), their Jacobian
/// dPsi/dtheta (S x K), and the centered correlants F_S(theta).
template <class M>
concept MomentModel = requires(const M& m, const Eigen::VectorXd& theta) {
  { m.param_dim() } -> std::convertible_to<int>;
  { m.basis_size() } -> std::convertible_to<int>;
  { m.psi(theta) } -> std::convertible_to<Eigen::VectorXd>;
  { m.dpsi(theta) } -> std::convertible_to<Eigen::MatrixXd>;
  { m.correlants(theta) } -> std::convertible_to<CorrelantMatrix>;
};

/// xi = theta + noise with a power basis of degree S: Psi_i(theta) is the
/// i-th raw moment of a distribution with mean theta and the noise
/// cumulants, and dPsi_i/dtheta = i alpha_{i-1}(theta).
class LocationModel {
 public:
  LocationModel(CumulantSet noise, int degree) : noise_(std::move(noise)), degree_(degree) {
    if (degree_ < 1) throw DimensionMismatch("degree must be >= 1");
    if (noise_.order() < 2 * degree_)
      throw OrderUnavailable("location model of degree " + std::to_string(degree_) + " needs cumulants up to c" +
                             std::to_string(2 * degree_));
  }

  [[nodiscard]] int param_dim() const { return 1; }
  [[nodiscard]] int basis_size() const { return degree_; }
  [[nodiscard]] const CumulantSet& noise() const { return noise_; }

  [[nodiscard]] Eigen::VectorXd psi(const Eigen::VectorXd& theta) const {
    const auto a = raw_moments_from_cumulants(noise_, theta(0), degree_);
    return Eigen::Map<const Eigen::VectorXd>(a.values().data(), degree_);
  }
  [[nodiscard]] Eigen::MatrixXd dpsi(const Eigen::VectorXd& theta) const {
    const auto a = raw_moments_from_cumulants(noise_, theta(0), std::max(1, degree_ - 1));
    Eigen::MatrixXd d(degree_, 1);
    for (int i = 1; i <= degree_; ++i) d(i - 1, 0) = i * a.alpha(i - 1);
    return d;
  }
  [[nodiscard]] CorrelantMatrix correlants(const Eigen::VectorXd& theta) const {
    return compute_correlant_matrix(BasisFamily::power(degree_),
                                    raw_moments_from_cumulants(noise_, theta(0), 2 * degree_));
  }

 private:
  CumulantSet noise_;
  int degree_;
};

/// Largest relative discrepancy between model.dpsi and central differences
/// of model.psi at theta.
template <MomentModel M>
[[nodiscard]] double max_derivative_error(const M& model, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd analytic = model.dpsi(theta);
  const EstimatingFunction f = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd { return model.psi(t); };
  const Eigen::MatrixXd numeric = numeric_jacobian(f, theta);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double scale = std::max(1.0, std::abs(analytic(i, j)));
      worst = std::max(worst, std::abs(analytic(i, j) - numeric(i, j)) / scale);
    }
  return worst;
}

namespace detail {

inline Eigen::MatrixXd solve_spd(const CorrelantMatrix& cm, const Eigen::MatrixXd& rhs) {
  detail::require_nondegenerate(cm);
  const auto ldlt = cm.F.ldlt();
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) return ldlt.solve(rhs);
  return cm.F.partialPivLu().solve(rhs);
}

}  // namespace detail

/// Optimal coefficients h*: column j solves F_S(theta) h = dPsi/dtheta_j.
template <MomentModel M>
[[nodiscard]] Eigen::MatrixXd optimal_coefficients(const M& model, const Eigen::VectorXd& theta) {
  if (theta.size() != model.param_dim()) throw DimensionMismatch("parameter vector has the wrong length");
  return detail::solve_spd(model.correlants(theta), model.dpsi(theta));
}

/// Per-observation asymptotic covariance of the PMM estimate,
/// (dPsi^T F^{-1} dPsi)^{-1}.
template <MomentModel M>
[[nodiscard]] Eigen::MatrixXd predicted_covariance(const M& model, const Eigen::VectorXd& theta) {
  const auto cm = model.correlants(theta);
  const Eigen::MatrixXd d = model.dpsi(theta);
  const Eigen::MatrixXd info = d.transpose() * detail::solve_spd(cm, d);
  return info.inverse();
}

/// Ratio of the predicted PMM variance to that of the estimator built on the
/// first K basis functions alone (the linear estimator for location models).
/// For K > 1 the ratio of generalized variances to the power 1/K is returned.
template <MomentModel M>
[[nodiscard]] double predicted_variance_ratio(const M& model, const Eigen::VectorXd& theta) {
  const auto cm = model.correlants(theta);
  const Eigen::MatrixXd d = model.dpsi(theta);
  const Eigen::Index k = d.cols();
  const Eigen::MatrixXd full = (d.transpose() * detail::solve_spd(cm, d)).inverse();
  CorrelantMatrix head = cm;
  head.F = cm.F.topLeftCorner(k, k);
  head.psi = cm.psi.head(k);
  const Eigen::VectorXd diag = head.F.diagonal();
  double prod = 1.0;
  for (Eigen::Index i = 0; i < k; ++i) prod *= diag(i);
  head.det = head.F.determinant();
  head.normalized_det = prod > 0.0 ? head.det / prod : 0.0;
  const Eigen::MatrixXd dk = d.topRows(k);
  const Eigen::MatrixXd reduced = (dk.transpose() * detail::solve_spd(head, dk)).inverse();
  if (k == 1) return full(0, 0) / reduced(0, 0);
  return std::pow(full.determinant() / reduced.determinant(), 1.0 / static_cast<double>(k));
}

struct PmmEstimate {
  Eigen::VectorXd theta_hat;
  int iterations = 0;
  bool converged = false;
  /// Predicted asymptotic variance ratio against the linear estimator.
  double g_coefficient = 1.0;
  /// Optimal coefficients at theta_hat (S x K; for regression the PMM2
  /// weights (a, b) as a 2 x 1 column).
  Eigen::MatrixXd coefficients;
  double residual_norm = 0.0;
};

/// PMM estimate from empirical basis averages m_i = (1/N) sum phi_i(x_n):
/// the root of sum_i h*_{ij}(theta) [m_i - Psi_i(theta)] = 0, j = 1..K, by
/// damped Newton iteration from `init`.
template <MomentModel M>
[[nodiscard]] PmmEstimate pmm_estimate(const M& model, const Eigen::VectorXd& sample_means,
                                       const Eigen::VectorXd& init, const NewtonOptions& opt = {}) {
  if (sample_means.size() != model.basis_size())
    throw DimensionMismatch("expected " + std::to_string(model.basis_size()) + " basis averages");
  if (init.size() != model.param_dim()) throw DimensionMismatch("initial parameter vector has the wrong length");
  const EstimatingFunction g = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd {
    return optimal_coefficients(model, t).transpose() * (sample_means - model.psi(t));
  };
  const Eigen::MatrixXd h0 = optimal_coefficients(model, init);
  const Eigen::VectorXd psi0 = model.psi(init);
  const double scale = (h0.cwiseAbs().transpose() * (sample_means.cwiseAbs() + psi0.cwiseAbs())).sum();
  const auto nr = solve_estimating_equations(g, init, scale, opt);
  if (!nr.converged && nr.iterations >= opt.max_iterations)
    throw NoConvergence("PMM Newton iteration hit " + std::to_string(opt.max_iterations) + " iterations");
  PmmEstimate est;
  est.theta_hat = nr.theta;
  est.iterations = nr.iterations;
  est.converged = nr.converged;
  est.residual_norm = nr.residual_norm;
  est.coefficients = optimal_coefficients(model, nr.theta);
  est.g_coefficient = predicted_variance_ratio(model, nr.theta);
  return est;
}

/// g2 = 1 - gamma3^2 / (2 + gamma4): PMM2 variance relative to the sample mean.
[[nodiscard]] inline double variance_reduction_g2(double gamma3, double gamma4) {
  if (!std::isfinite(gamma3) || !std::isfinite(gamma4)) throw InvalidShape("non-finite shape coefficients");
  if (!(2.0 + gamma4 > 0.0)) throw InvalidShape("2 + gamma4 must be positive");
  if (gamma4 < gamma3 * gamma3 - 2.0 - kRealizabilityTolerance)
    throw InvalidShape("gamma4 >= gamma3^2 - 2 violated");
  return 1.0 - gamma3 * gamma3 / (2.0 + gamma4);
}

/// Predicted variance ratio of the degree-S location estimator for noise
/// with the given cumulants (evaluated at zero location).
[[nodiscard]] inline double predicted_location_ratio(const CumulantSet& noise, int degree) {
  return predicted_variance_ratio(LocationModel(noise, degree), Eigen::VectorXd::Zero(1));
}

/// Degree-S PMM location estimate. The sample is shifted by its mean before
/// solving; the estimator is translation equivariant so this only improves
/// conditioning.
[[nodiscard]] inline PmmEstimate pmm_location_estimate(std::span<const double> sample, const CumulantSet& noise,
                                                       int degree, const NewtonOptions& opt = {}) {
  const double shift = sample_mean(sample);
  std::vector<double> centered(sample.begin(), sample.end());
  for (double& v : centered) v -= shift;
  const auto m = empirical_power_means(centered, degree);
  const LocationModel model(noise, degree);
  auto est = pmm_estimate(model, Eigen::Map<const Eigen::VectorXd>(m.data(), degree), Eigen::VectorXd::Zero(1), opt);
  est.theta_hat(0) += shift;
  return est;
}

/// PMM2 location estimate; noise cumulants are estimated from the sample
/// (k-statistics) unless supplied. With cumulants taken from the same
/// sample the second equation carries no location information (c2 is
/// measured about the sample mean) and the estimate stays within O(1/N) of
/// the mean; the variance reduction needs externally known noise cumulants.
[[nodiscard]] inline PmmEstimate pmm2_location(std::span<const double> sample,
                                               const std::optional<CumulantSet>& noise = std::nullopt,
                                               const NewtonOptions& opt = {}) {
  const CumulantSet c = noise ? *noise : sample_cumulants(sample, 4);
  return pmm_location_estimate(sample, c, 2, opt);
}

inline constexpr double kSymmetryThreshold = 0.1;

/// PMM3 location estimate for symmetric (typically platykurtic) noise: the
/// degree-3 model with c3 = c5 = 0.
[[nodiscard]] inline PmmEstimate pmm3_estimate_location(std::span<const double> sample, const CumulantSet& noise,
                                                        const NewtonOptions& opt = {},
                                                        double symmetry_threshold = kSymmetryThreshold) {
  if (noise.order() < 6) throw OrderUnavailable("PMM3 needs cumulants up to c6");
  const double g3 = noise.gamma3();
  if (!(std::abs(g3) < symmetry_threshold))
    throw AsymmetryDetected("|gamma3| = " + std::to_string(std::abs(g3)) + " exceeds the symmetry threshold " +
                            std::to_string(symmetry_threshold));
  return pmm_location_estimate(sample, noise.symmetrized(), 3, opt);
}

enum class Method { ols, pmm2, pmm3 };

[[nodiscard]] inline std::string to_string(Method m) {
  switch (m) {
    case Method::ols: return "OLS";
    case Method::pmm2: return "PMM2";
    case Method::pmm3: return "PMM3";
  }
  return "?";
}

struct DispatchOptions {
  /// Minimum predicted relative variance gain.
  double delta = 0.02;
  double symmetry_threshold = kSymmetryThreshold;
  double platykurtic_threshold = -0.1;
};

struct DispatchDecision {
  Method method = Method::ols;
  double gamma3 = 0.0;
  double gamma4 = 0.0;
  double g2 = 1.0;
  double g3 = 1.0;
};

inline constexpr std::size_t kMinDispatchSample = 30;

/// Chooses OLS, PMM2 or PMM3 from sample shape estimates by the predicted
/// variance-reduction coefficients.
[[nodiscard]] inline DispatchDecision pmm_dispatch(std::span<const double> sample, const DispatchOptions& opt = {}) {
  if (sample.size() < kMinDispatchSample)
    throw InsufficientData("dispatch needs at least " + std::to_string(kMinDispatchSample) + " observations");
  const auto c = sample_cumulants(sample, 6);
  DispatchDecision d;
  d.gamma3 = c.gamma3();
  d.gamma4 = c.gamma4();
  d.g2 = variance_reduction_g2(d.gamma3, d.gamma4);
  if (d.g2 < 1.0 - opt.delta) {
    d.method = Method::pmm2;
    return d;
  }
  if (std::abs(d.gamma3) < opt.symmetry_threshold && d.gamma4 < opt.platykurtic_threshold) {
    try {
      d.g3 = predicted_location_ratio(c.symmetrized(), 3);
    } catch (const Error&) {
      d.g3 = 1.0;  // degenerate or unrealizable sixth-order shape: no predicted gain
    }
    if (d.g3 < 1.0 - opt.delta) d.method = Method::pmm3;
  }
  return d;
}

/// PMM2 weights (a, b) solving F2 (a, b)^T = (1, 0)^T for centered errors,
/// F2 = [[c2, c3], [c3, c4 + 2 c2^2]].
struct Pmm2Weights {
  double a = 0.0;
  double b = 0.0;
};

[[nodiscard]] inline Pmm2Weights pmm2_weights(const CumulantSet& c) {
  const double c2 = c.c2();
  const double c3 = c.c3();
  const double f22 = c.c4() + 2.0 * c2 * c2;
  const double det = c2 * f22 - c3 * c3;
  if (!(c2 > 0.0) || !(f22 > 0.0) || !(det > kDegeneracyTolerance * c2 * f22))
    throw DegenerateCorrelantMatrix("residual correlant matrix F2 is degenerate (det " + std::to_string(det) + ")");
  return {f22 / det, -c3 / det};
}

/// Solves the stacked PMM2 equations
///   sum_v J_vj(theta) [a e_v + b (e_v^2 - c2)] = 0,  e_v = y_v - R(theta, x_v),
/// by damped Newton from `init` with the residual cumulants held fixed.
template <Response R>
[[nodiscard]] PmmEstimate pmm2_refine(const R& response, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& init, const CumulantSet& residual_cumulants,
                                      const NewtonOptions& opt = {}) {
  check_regression_inputs(response, x, y);
  const auto w = pmm2_weights(residual_cumulants);
  const double c2 = residual_cumulants.c2();
  PmmEstimate est;
  est.coefficients = Eigen::Vector2d(w.a, w.b);
  const double g3 = residual_cumulants.gamma3();
  est.g_coefficient = variance_reduction_g2(g3, residual_cumulants.gamma4());
  if (w.b == 0.0) {
    // Symmetric residuals: the equations are the least-squares normal equations.
    const Eigen::VectorXd e = y - response_values(response, init, x);
    est.theta_hat = init;
    est.converged = true;
    est.residual_norm = (response_jacobian(response, init, x).transpose() * e).norm() * std::abs(w.a);
    return est;
  }
  const EstimatingFunction g = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd {
    const Eigen::VectorXd e = y - response_values(response, t, x);
    const Eigen::VectorXd weight = (w.a * e.array() + w.b * (e.array().square() - c2)).matrix();
    return response_jacobian(response, t, x).transpose() * weight;
  };
  const Eigen::VectorXd e0 = y - response_values(response, init, x);
  const Eigen::MatrixXd j0 = response_jacobian(response, init, x);
  const Eigen::VectorXd mag = (std::abs(w.a) * e0.array().abs() + std::abs(w.b) * (e0.array().square() + c2)).matrix();
  const double scale = (j0.cwiseAbs().transpose() * mag).sum();
  const auto nr = solve_estimating_equations(g, init, scale, opt);
  if (!nr.converged && nr.iterations >= opt.max_iterations)
    throw NoConvergence("PMM2 regression hit " + std::to_string(opt.max_iterations) + " iterations");
  est.theta_hat = nr.theta;
  est.iterations = nr.iterations;
  est.converged = nr.converged;
  est.residual_norm = nr.residual_norm;
  return est;
}

/// Two-stage PMM2 regression: least-squares fit from `init`, residual
/// cumulants c2..c4 (unless supplied), then the PMM2 equations.
template <Response R>
[[nodiscard]] PmmEstimate pmm2_regression(const R& response, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& init,
                                          const std::optional<CumulantSet>& residual_cumulants = std::nullopt,
                                          const NewtonOptions& opt = {}) {
  const Eigen::VectorXd ls = least_squares_fit(response, x, y, init);
  CumulantSet c = residual_cumulants ? *residual_cumulants : [&] {
    const Eigen::VectorXd e = y - response_values(response, ls, x);
    return sample_cumulants(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())), 4);
  }();
  return pmm2_refine(response, x, y, ls, c, opt);
}

}  // namespace polyest
