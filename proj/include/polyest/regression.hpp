#pragma once

// Regression response descriptors R(theta, x) with Jacobians, and the
// least-squares fits used to initialize the moment estimators.

#include <polyest/errors.hpp>
#include <polyest/solvers.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <string>

namespace polyest {

/// A response function of a K-vector of parameters and one design row.
template <class R>
concept Response = requires(const R& r, const Eigen::VectorXd& theta, const Eigen::RowVectorXd& x) {
  { r.param_dim() } -> std::convertible_to<int>;
  { r.value(theta, x) } -> std::convertible_to<double>;
  { r.gradient(theta, x) } -> std::convertible_to<Eigen::VectorXd>;
};

/// R = x^T theta. The design row is the regressor vector.
struct LinearResponse {
  int dim = 1;
  [[nodiscard]] int param_dim() const { return dim; }
  [[nodiscard]] double value(const Eigen::VectorXd& theta, const Eigen::RowVectorXd& x) const { return x.dot(theta); }
  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd&, const Eigen::RowVectorXd& x) const {
    return x.transpose();
  }
  [[nodiscard]] static constexpr bool is_linear() { return true; }
};

/// R = theta1 exp(theta2 x); uses column 0 of the design row.
struct ExponentialResponse {
  [[nodiscard]] int param_dim() const { return 2; }
  [[nodiscard]] double value(const Eigen::VectorXd& t, const Eigen::RowVectorXd& x) const {
    return t(0) * std::exp(t(1) * x(0));
  }
  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& t, const Eigen::RowVectorXd& x) const {
    const double e = std::exp(t(1) * x(0));
    return Eigen::Vector2d(e, t(0) * x(0) * e);
  }
  [[nodiscard]] static constexpr bool is_linear() { return false; }
};

/// R = theta1 / (1 + exp(theta2 + theta3 x)); uses column 0 of the design row.
struct GrowthResponse {
  [[nodiscard]] int param_dim() const { return 3; }
  [[nodiscard]] double value(const Eigen::VectorXd& t, const Eigen::RowVectorXd& x) const {
    return t(0) / (1.0 + std::exp(t(1) + t(2) * x(0)));
  }
  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::VectorXd& t, const Eigen::RowVectorXd& x) const {
    const double e = std::exp(t(1) + t(2) * x(0));
    const double d = 1.0 + e;
    const double dr = -t(0) * e / (d * d);
    return Eigen::Vector3d(1.0 / d, dr, dr * x(0));
  }
  [[nodiscard]] static constexpr bool is_linear() { return false; }
};

template <Response R>
[[nodiscard]] Eigen::VectorXd response_values(const R& r, const Eigen::VectorXd& theta, const Eigen::MatrixXd& x) {
  Eigen::VectorXd v(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) v(i) = r.value(theta, x.row(i));
  return v;
}

/// N x K matrix of dR/dtheta.
template <Response R>
[[nodiscard]] Eigen::MatrixXd response_jacobian(const R& r, const Eigen::VectorXd& theta, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd j(x.rows(), r.param_dim());
  for (Eigen::Index i = 0; i < x.rows(); ++i) j.row(i) = r.gradient(theta, x.row(i)).transpose();
  return j;
}

template <Response R>
void check_regression_inputs(const R& r, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionMismatch("design rows and response length differ");
  if (x.rows() <= r.param_dim())
    throw InsufficientData("need more observations (" + std::to_string(x.rows()) + ") than parameters (" +
                           std::to_string(r.param_dim()) + ")");
}

/// Least-squares fit: closed form for linear responses, Levenberg-Marquardt
/// from `init` otherwise.
template <Response R>
[[nodiscard]] Eigen::VectorXd least_squares_fit(const R& r, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                const Eigen::VectorXd& init) {
  check_regression_inputs(r, x, y);
  if constexpr (requires { R::is_linear(); }) {
    if constexpr (R::is_linear()) return ordinary_least_squares(x, y);
  }
  LeastSquaresProblem p;
  p.params = r.param_dim();
  p.residuals = static_cast<int>(y.size());
  p.residual = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd { return y - response_values(r, t, x); };
  p.jacobian = [&](const Eigen::VectorXd& t) -> Eigen::MatrixXd { return -response_jacobian(r, t, x); };
  const auto fit = levenberg_marquardt(p, init);
  if (!fit.converged) throw NoConvergence("nonlinear least squares did not converge");
  return fit.theta;
}

}  // namespace polyest
