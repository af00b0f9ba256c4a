#pragma once

// Second-order least squares (SLS): fits the first two conditional moments
//   E[y|x] = R(theta, x),  E[y^2|x] = R^2(theta, x) + sigma^2
// by minimizing sum_v rho_v^T W_v rho_v with
//   rho_v = (y_v - R_v, y_v^2 - R_v^2 - sigma^2).
// Scalar weighting uses W = diag(1, omega); optimal weighting uses
// W_v = Cov(rho_v)^{-1} built from error cumulants c2..c4.

#include <polyest/errors.hpp>
#include <polyest/moments.hpp>
#include <polyest/regression.hpp>
#include <polyest/solvers.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace polyest {

enum class SlsWeighting { scalar, optimal };

template <Response R>
struct SlsProblem {
  R response;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  double omega = 0.0;
  /// Fixed error variance; profiled out of the objective when empty.
  std::optional<double> sigma2;
  SlsWeighting weighting = SlsWeighting::scalar;
  /// Error cumulants for optimal weighting (c2..c4 required).
  std::optional<CumulantSet> weight_cumulants;
};

struct SlsEstimate {
  Eigen::VectorXd theta_hat;
  double sigma2_hat = 0.0;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
};

namespace detail {

/// Per-observation weight entries (w11, w12, w22); diag(1, omega) or the
/// inverse covariance of rho at the design point.
struct SlsWeights {
  Eigen::VectorXd w11, w12, w22;
};

inline Eigen::Matrix2d rho_covariance(const CumulantSet& c, double r) {
  const double c2 = c.c2(), c3 = c.c3(), c4 = c.c4();
  Eigen::Matrix2d cov;
  cov(0, 0) = c2;
  cov(0, 1) = cov(1, 0) = c3 + 2.0 * r * c2;
  cov(1, 1) = c4 + 2.0 * c2 * c2 + 4.0 * r * c3 + 4.0 * r * r * c2;
  return cov;
}

template <Response R>
SlsWeights sls_weights(const SlsProblem<R>& p, const Eigen::VectorXd& theta) {
  const Eigen::Index n = p.y.size();
  SlsWeights w{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Constant(n, p.omega)};
  if (p.weighting == SlsWeighting::scalar) return w;
  const Eigen::VectorXd rv = response_values(p.response, theta, p.x);
  // Scale so that w11 = 1 at the first observation; the minimizer is unchanged.
  double scale = 0.0;
  for (Eigen::Index v = 0; v < n; ++v) {
    const Eigen::Matrix2d cov = rho_covariance(*p.weight_cumulants, rv(v));
    const double det = cov.determinant();
    if (!(det > 0.0)) throw InvalidShape("error cumulants give a singular moment covariance");
    const Eigen::Matrix2d inv = cov.inverse();
    if (v == 0) scale = 1.0 / inv(0, 0);
    w.w11(v) = scale * inv(0, 0);
    w.w12(v) = scale * inv(0, 1);
    w.w22(v) = scale * inv(1, 1);
  }
  return w;
}

}  // namespace detail

/// Closed-form minimizer over sigma^2 >= 0 of the objective at fixed theta.
template <Response R>
[[nodiscard]] double sls_profiled_sigma2(const SlsProblem<R>& p, const Eigen::VectorXd& rv,
                                         const detail::SlsWeights& w) {
  if (p.sigma2) return *p.sigma2;
  const Eigen::ArrayXd r1 = p.y.array() - rv.array();
  const Eigen::ArrayXd d = p.y.array().square() - rv.array().square();
  const double den = w.w22.sum();
  if (!(den > 0.0)) return 0.0;
  return std::max(0.0, (w.w12.array() * r1 + w.w22.array() * d).sum() / den);
}

template <Response R>
[[nodiscard]] double sls_objective(const SlsProblem<R>& p, const Eigen::VectorXd& theta,
                                   const detail::SlsWeights& w) {
  const Eigen::VectorXd rv = response_values(p.response, theta, p.x);
  const double s2 = sls_profiled_sigma2(p, rv, w);
  const Eigen::ArrayXd r1 = p.y.array() - rv.array();
  const Eigen::ArrayXd r2 = p.y.array().square() - rv.array().square() - s2;
  return (w.w11.array() * r1.square() + 2.0 * w.w12.array() * r1 * r2 + w.w22.array() * r2.square()).sum();
}

/// Objective with the problem's own weights (for optimal weighting, taken
/// at theta itself).
template <Response R>
[[nodiscard]] double sls_objective(const SlsProblem<R>& p, const Eigen::VectorXd& theta) {
  return sls_objective(p, theta, detail::sls_weights(p, theta));
}

template <Response R>
void validate(const SlsProblem<R>& p) {
  check_regression_inputs(p.response, p.x, p.y);
  if (!(p.omega >= 0.0) || !std::isfinite(p.omega)) throw InvalidShape("omega must be finite and >= 0");
  if (p.y.size() < p.response.param_dim() + 2) throw InsufficientData("SLS needs N > K + 1");
  if (p.sigma2 && !(*p.sigma2 >= 0.0)) throw InvalidShape("sigma2 must be >= 0");
  if (p.weighting == SlsWeighting::optimal) {
    if (!p.weight_cumulants) throw InvalidShape("optimal weighting needs error cumulants");
    if (p.weight_cumulants->order() < 4) throw OrderUnavailable("optimal weighting needs cumulants up to c4");
    if (!(p.weight_cumulants->c2() > 0.0)) throw InvalidShape("error variance c2 must be positive");
  }
}

/// SLS estimate by Levenberg-Marquardt on the whitened stacked residuals
/// L_v rho_v (L_v^T L_v = W_v). Optimal weights are evaluated once at
/// `init` (two-step estimator).
template <Response R>
[[nodiscard]] SlsEstimate sls_estimate(const SlsProblem<R>& p, const Eigen::VectorXd& init) {
  validate(p);
  if (init.size() != p.response.param_dim()) throw DimensionMismatch("initial parameter vector has the wrong length");
  const auto w = detail::sls_weights(p, init);
  const double q0 = sls_objective(p, init, w);
  if (!std::isfinite(q0)) throw NonFiniteObjective("objective is not finite at the starting point");
  const Eigen::Index n = p.y.size();
  const bool second = p.weighting == SlsWeighting::optimal || p.omega > 0.0;
  // Cholesky of [[w11, w12], [w12, w22]] = L^T L with L = [[a, b], [0, c]].
  Eigen::VectorXd la(n), lb(n), lc(n);
  for (Eigen::Index v = 0; v < n; ++v) {
    la(v) = std::sqrt(w.w11(v));
    lb(v) = w.w12(v) / la(v);
    lc(v) = std::sqrt(std::max(0.0, w.w22(v) - lb(v) * lb(v)));
  }

  LeastSquaresProblem lsq;
  lsq.params = p.response.param_dim();
  lsq.residuals = static_cast<int>(second ? 2 * n : n);
  lsq.residual = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd {
    const Eigen::VectorXd rv = response_values(p.response, t, p.x);
    Eigen::VectorXd r(lsq.residuals);
    const Eigen::ArrayXd r1 = (p.y - rv).array();
    if (!second) {
      r = r1.matrix();
      return r;
    }
    const double s2 = sls_profiled_sigma2(p, rv, w);
    const Eigen::ArrayXd r2 = p.y.array().square() - rv.array().square() - s2;
    r.head(n) = (la.array() * r1 + lb.array() * r2).matrix();
    r.tail(n) = (lc.array() * r2).matrix();
    return r;
  };
  lsq.jacobian = [&](const Eigen::VectorXd& t) -> Eigen::MatrixXd {
    const Eigen::VectorXd rv = response_values(p.response, t, p.x);
    const Eigen::MatrixXd jr = response_jacobian(p.response, t, p.x);
    Eigen::MatrixXd j(lsq.residuals, lsq.params);
    const Eigen::MatrixXd d1 = -jr;
    if (!second) {
      j = d1;
      return j;
    }
    Eigen::MatrixXd d2 = -2.0 * (rv.asDiagonal() * jr);
    const Eigen::ArrayXd r1 = (p.y - rv).array();
    const Eigen::ArrayXd dd = p.y.array().square() - rv.array().square();
    const bool profiled = !p.sigma2 && (w.w12.array() * r1 + w.w22.array() * dd).sum() > 0.0;
    if (profiled) {
      // d sigma^2 / d theta from the closed-form profile.
      const Eigen::RowVectorXd ds2 =
          (w.w12.transpose() * d1 + w.w22.transpose() * d2) / w.w22.sum();
      d2.rowwise() -= ds2;
    }
    j.topRows(n) = la.asDiagonal() * d1 + lb.asDiagonal() * d2;
    j.bottomRows(n) = lc.asDiagonal() * d2;
    return j;
  };
  const auto fit = levenberg_marquardt(lsq, init);
  SlsEstimate out;
  out.theta_hat = fit.theta;
  out.converged = fit.converged;
  out.iterations = fit.iterations;
  out.objective = sls_objective(p, fit.theta, w);
  if (!std::isfinite(out.objective)) throw NonFiniteObjective("objective diverged");
  if (!fit.converged) throw NoConvergence("SLS minimization did not converge");
  out.sigma2_hat = sls_profiled_sigma2(p, response_values(p.response, fit.theta, p.x), w);
  return out;
}

/// Asymptotic covariance (theta block, up to the 1/N factor convention of
/// the summed design) of SLS with weight omega, for errors with cumulants
/// c2..c4, at the design x and parameter theta. Sandwich A^{-1} B A^{-1}
/// over gamma = (theta, sigma^2).
template <Response R>
[[nodiscard]] Eigen::MatrixXd sls_asymptotic_covariance(const CumulantSet& c, const R& response,
                                                        const Eigen::MatrixXd& x, const Eigen::VectorXd& theta,
                                                        double omega) {
  const int k = response.param_dim();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k + 1, k + 1);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k + 1, k + 1);
  const Eigen::Matrix2d w = Eigen::Vector2d(1.0, omega).asDiagonal();
  for (Eigen::Index v = 0; v < x.rows(); ++v) {
    const double rv = response.value(theta, x.row(v));
    const Eigen::VectorXd jv = response.gradient(theta, x.row(v));
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, k + 1);
    d.row(0).head(k) = -jv.transpose();
    d.row(1).head(k) = -2.0 * rv * jv.transpose();
    d(1, k) = -1.0;
    const Eigen::Matrix2d cov = detail::rho_covariance(c, rv);
    a += d.transpose() * w * d;
    b += d.transpose() * w * cov * w * d;
  }
  const Eigen::MatrixXd ainv = a.inverse();
  return (ainv * b * ainv).topLeftCorner(k, k);
}

/// Log grid on the dimensionless weight omega * c2.
inline constexpr double kOmegaGridLow = 1e-4;
inline constexpr double kOmegaGridHigh = 1e2;
inline constexpr int kOmegaGridPoints = 121;

/// Omega minimizing the summed per-parameter asymptotic variance ratio
/// SLS/OLS over the log grid, at a given design and parameter value.
template <Response R>
[[nodiscard]] double sls_default_omega(const CumulantSet& residual_cumulants, const R& response,
                                       const Eigen::MatrixXd& x, const Eigen::VectorXd& theta) {
  const double c2 = residual_cumulants.c2();
  if (!(c2 > 0.0)) throw InvalidShape("residual variance c2 must be positive");
  if (residual_cumulants.order() < 4) throw OrderUnavailable("omega selection needs cumulants up to c4");
  const Eigen::MatrixXd jac = response_jacobian(response, theta, x);
  const Eigen::VectorXd ols_var = (c2 * (jac.transpose() * jac).inverse()).diagonal();
  double best_omega = kOmegaGridLow / c2;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kOmegaGridPoints; ++i) {
    const double t = static_cast<double>(i) / (kOmegaGridPoints - 1);
    const double omega = std::pow(10.0, std::log10(kOmegaGridLow) + t * (std::log10(kOmegaGridHigh) -
                                                                           std::log10(kOmegaGridLow))) / c2;
    const Eigen::MatrixXd v = sls_asymptotic_covariance(residual_cumulants, response, x, theta, omega);
    const double crit = (v.diagonal().array() / ols_var.array()).sum();
    if (crit < best) {
      best = crit;
      best_omega = omega;
    }
  }
  return best_omega;
}

/// Omega for the reference design: a straight line R = theta0 + theta1 t on
/// 101 equispaced points t in [0, 1], spanning four error standard
/// deviations.
[[nodiscard]] inline double sls_default_omega(const CumulantSet& residual_cumulants) {
  if (!(residual_cumulants.c2() > 0.0)) throw InvalidShape("residual variance c2 must be positive");
  constexpr int n = 101;
  Eigen::MatrixXd x(n, 2);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = static_cast<double>(i) / (n - 1);
  }
  const Eigen::Vector2d theta(0.0, 4.0 * std::sqrt(residual_cumulants.c2()));
  return sls_default_omega(residual_cumulants, LinearResponse{2}, x, theta);
}

}  // namespace polyest
