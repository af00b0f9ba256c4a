#pragma once

// Numerical workhorses shared by the estimators: a damped Newton solver for
// square estimating-equation systems, linear least squares, and a
// Levenberg-Marquardt wrapper for nonlinear least squares.

#include <polyest/errors.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace polyest {

struct NewtonOptions {
  int max_iterations = 100;
  int max_halvings = 20;
  /// Relative step size below which iteration stops.
  double tolerance = 1e-10;
  /// A run counts as converged only if ||G|| <= acceptance * residual scale.
  double acceptance = 1e-8;
};

struct NewtonResult {
  Eigen::VectorXd theta;
  int iterations = 0;
  bool converged = false;
  double residual_norm = 0.0;
};

using EstimatingFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Central-difference Jacobian of a vector function.
[[nodiscard]] inline Eigen::MatrixXd numeric_jacobian(const EstimatingFunction& g, const Eigen::VectorXd& theta) {
  const Eigen::Index k = theta.size();
  Eigen::MatrixXd jac;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(theta(j)));
    Eigen::VectorXd up = theta, down = theta;
    up(j) += step;
    down(j) -= step;
    const Eigen::VectorXd gu = g(up);
    const Eigen::VectorXd gd = g(down);
    if (jac.size() == 0) jac.resize(gu.size(), k);
    jac.col(j) = (gu - gd) / (up(j) - down(j));
  }
  return jac;
}

/// Solves g(theta) = 0 by Newton iteration with a finite-difference Jacobian.
/// A step is halved (up to max_halvings times) while it fails to reduce
/// ||g||. `residual_scale` sets the magnitude against which ||g|| is judged.
[[nodiscard]] inline NewtonResult solve_estimating_equations(const EstimatingFunction& g, Eigen::VectorXd theta,
                                                             double residual_scale,
                                                             const NewtonOptions& opt = {}) {
  NewtonResult res;
  if (!(residual_scale > 0.0) || !std::isfinite(residual_scale)) residual_scale = 1.0;
  Eigen::VectorXd gv = g(theta);
  if (!gv.allFinite()) throw NoConvergence("estimating function is not finite at the starting point");
  double norm = gv.norm();
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (norm <= 1e-15 * residual_scale) break;
    const Eigen::MatrixXd jac = numeric_jacobian(g, theta);
    const Eigen::VectorXd step = jac.colPivHouseholderQr().solve(-gv);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    Eigen::VectorXd gtrial;
    for (int h = 0; h <= opt.max_halvings; ++h, lambda *= 0.5) {
      trial = theta + lambda * step;
      gtrial = g(trial);
      if (gtrial.allFinite() && gtrial.norm() < norm) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double rel_step = (trial - theta).norm() / (1.0 + theta.norm());
    theta = trial;
    gv = gtrial;
    norm = gv.norm();
    if (rel_step <= opt.tolerance) {
      ++it;
      break;
    }
  }
  res.theta = theta;
  res.iterations = it;
  res.residual_norm = norm;
  res.converged = norm <= opt.acceptance * residual_scale;
  return res;
}

/// Ordinary least squares via column-pivoted QR.
[[nodiscard]] inline Eigen::VectorXd ordinary_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw DimensionMismatch("design rows and response length differ");
  if (x.rows() < x.cols()) throw InsufficientData("fewer observations than parameters");
  const auto qr = x.colPivHouseholderQr();
  if (qr.rank() < x.cols()) throw SingularSystem("design matrix is rank deficient");
  return qr.solve(y);
}

/// A residual vector r(theta) with its Jacobian, minimized in the
/// sum-of-squares sense.
struct LeastSquaresProblem {
  int params = 0;
  int residuals = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

struct LeastSquaresResult {
  Eigen::VectorXd theta;
  bool converged = false;
  int iterations = 0;
  double cost = 0.0;  // sum of squared residuals
};

namespace detail {

struct LmFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const LeastSquaresProblem* p;
  int inputs() const { return p->params; }
  int values() const { return p->residuals; }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    f = p->residual(x);
    return f.allFinite() ? 0 : -1;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& j) const {
    j = p->jacobian(x);
    return j.allFinite() ? 0 : -1;
  }
};

}  // namespace detail

/// Levenberg-Marquardt (MINPACK lmder) on a LeastSquaresProblem.
[[nodiscard]] inline LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& prob, Eigen::VectorXd theta,
                                                            int max_evaluations = 2000) {
  detail::LmFunctor f{&prob};
  Eigen::LevenbergMarquardt<detail::LmFunctor> lm(f);
  lm.parameters.ftol = 1e-15;
  lm.parameters.xtol = 1e-15;
  lm.parameters.gtol = 0.0;
  lm.parameters.maxfev = max_evaluations;
  const auto status = lm.minimize(theta);
  LeastSquaresResult out;
  out.theta = theta;
  out.iterations = static_cast<int>(lm.iter);
  using S = Eigen::LevenbergMarquardtSpace::Status;
  out.converged = status != S::ImproperInputParameters && status != S::TooManyFunctionEvaluation &&
                  status != S::UserAsked && theta.allFinite();
  const Eigen::VectorXd r = prob.residual(theta);
  out.cost = r.squaredNorm();
  return out;
}

}  // namespace polyest
