#pragma once

// Second-order discrete Volterra model
//   y[n] = h0 + sum_i h1[i] x[n-i] + sum_{i,j} h2[i,j] x[n-i] x[n-j],
// its embedding as a stochastic polynomial on the lag-product basis, and
// block kernel adaptation (MMSE normal equations, and the moment-based
// variant).

#include <polyest/errors.hpp>
#include <polyest/moments.hpp>
#include <polyest/pmm.hpp>
#include <polyest/stochpoly.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace polyest {

struct VolterraKernels {
  double h0 = 0.0;
  Eigen::VectorXd h1;  // length M1
  Eigen::MatrixXd h2;  // M2 x M2, symmetric

  VolterraKernels() = default;
  VolterraKernels(double offset, Eigen::VectorXd linear, Eigen::MatrixXd quadratic)
      : h0(offset), h1(std::move(linear)), h2(std::move(quadratic)) {
    validate();
  }

  [[nodiscard]] int m1() const { return static_cast<int>(h1.size()); }
  [[nodiscard]] int m2() const { return static_cast<int>(h2.rows()); }
  /// Window length M = max(M1, M2).
  [[nodiscard]] int memory() const { return std::max(m1(), m2()); }

  void validate() const {
    if (h2.rows() != h2.cols()) throw DimensionMismatch("quadratic kernel must be square");
    if (memory() < 1) throw DimensionMismatch("kernels need memory >= 1");
    if (!std::isfinite(h0) || !h1.allFinite() || !h2.allFinite()) throw InvalidShape("kernel entries must be finite");
    const double scale = std::max(1.0, h2.cwiseAbs().maxCoeff());
    if ((h2 - h2.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw InvalidShape("quadratic kernel is not symmetric");
  }
};

/// Output for n = M-1 .. len-1 (no zero padding before the first full window).
[[nodiscard]] inline std::vector<double> volterra_predict(const VolterraKernels& k, std::span<const double> x) {
  k.validate();
  const int m = k.memory();
  if (x.size() < static_cast<std::size_t>(m))
    throw SignalTooShort("signal of length " + std::to_string(x.size()) + " is shorter than memory " +
                         std::to_string(m));
  std::vector<double> y;
  y.reserve(x.size() - static_cast<std::size_t>(m) + 1);
  for (std::size_t n = static_cast<std::size_t>(m) - 1; n < x.size(); ++n) {
    double v = k.h0;
    for (int i = 0; i < k.m1(); ++i) v += k.h1(i) * x[n - static_cast<std::size_t>(i)];
    for (int i = 0; i < k.m2(); ++i) {
      const double xi = x[n - static_cast<std::size_t>(i)];
      for (int j = 0; j < k.m2(); ++j) v += k.h2(i, j) * xi * x[n - static_cast<std::size_t>(j)];
    }
    y.push_back(v);
  }
  return y;
}

/// Flat coefficients (h0, then the lag-product basis of degree 2 and memory
/// M in canonical order). Linear entries are h1[i] (zero beyond M1); the
/// quadratic entry for lags i <= j is h2[i,i] on the diagonal and
/// 2 h2[i,j] off it (zero beyond M2).
[[nodiscard]] inline Eigen::VectorXd kernels_to_coefficients(const VolterraKernels& k) {
  k.validate();
  const int m = k.memory();
  const auto tuples = lag_index_tuples(2, m);
  Eigen::VectorXd c(static_cast<Eigen::Index>(tuples.size()) + 1);
  c(0) = k.h0;
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const auto& idx = tuples[t];
    double v = 0.0;
    if (idx.size() == 1) {
      if (idx[0] < k.m1()) v = k.h1(idx[0]);
    } else if (idx[1] < k.m2()) {
      v = idx[0] == idx[1] ? k.h2(idx[0], idx[0]) : 2.0 * k.h2(idx[0], idx[1]);
    }
    c(static_cast<Eigen::Index>(t) + 1) = v;
  }
  return c;
}

/// Inverse of kernels_to_coefficients with explicit kernel depths.
[[nodiscard]] inline VolterraKernels coefficients_to_kernels(const Eigen::VectorXd& c, int m1, int m2) {
  if (m1 < 0 || m2 < 0 || std::max(m1, m2) < 1) throw DimensionMismatch("invalid memory depths");
  const int m = std::max(m1, m2);
  const auto expected = static_cast<Eigen::Index>(basis_size(2, m)) + 1;
  if (c.size() != expected)
    throw LengthMismatch("expected " + std::to_string(expected) + " coefficients for memory " + std::to_string(m) +
                         ", got " + std::to_string(c.size()));
  const auto tuples = lag_index_tuples(2, m);
  Eigen::VectorXd h1 = Eigen::VectorXd::Zero(m1);
  Eigen::MatrixXd h2 = Eigen::MatrixXd::Zero(m2, m2);
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const auto& idx = tuples[t];
    const double v = c(static_cast<Eigen::Index>(t) + 1);
    if (idx.size() == 1) {
      if (idx[0] < m1) h1(idx[0]) = v;
    } else if (idx[1] < m2) {
      if (idx[0] == idx[1]) {
        h2(idx[0], idx[0]) = v;
      } else {
        h2(idx[0], idx[1]) = h2(idx[1], idx[0]) = 0.5 * v;
      }
    }
  }
  return VolterraKernels(c(0), std::move(h1), std::move(h2));
}

[[nodiscard]] inline VolterraKernels coefficients_to_kernels(const Eigen::VectorXd& c, int memory) {
  return coefficients_to_kernels(c, memory, memory);
}

/// Prediction through the flattened form: c0 + <c, phi(x_n)>.
[[nodiscard]] inline std::vector<double> predict_from_coefficients(const Eigen::VectorXd& c, int memory,
                                                                   std::span<const double> x) {
  const auto expected = static_cast<Eigen::Index>(basis_size(2, memory)) + 1;
  if (c.size() != expected) throw LengthMismatch("coefficient vector does not match memory");
  if (x.size() < static_cast<std::size_t>(memory)) throw SignalTooShort("signal shorter than memory");
  const Eigen::MatrixXd d = lag_design_matrix(x, 2, memory);
  const Eigen::VectorXd y = (d * c.tail(c.size() - 1)).array() + c(0);
  return {y.data(), y.data() + y.size()};
}

enum class AdaptationMethod { mmse, moment };

[[nodiscard]] inline std::string to_string(AdaptationMethod m) { return m == AdaptationMethod::mmse ? "mmse" : "moment"; }

struct AdaptationReport {
  VolterraKernels kernels;
  double residual_mse = 0.0;
  /// Ratio of extreme eigenvalues of the solved (regularized) system.
  double condition = 0.0;
  AdaptationMethod method = AdaptationMethod::mmse;
  /// ||A h - r|| / (||A|| ||h|| + ||r||) for the final linear system.
  double normal_equation_residual = 0.0;
  std::size_t samples = 0;
  /// Moment variant only: PMM2 weights and predicted g2 of the error class
  /// (1 when the refinement collapsed to the MMSE solution).
  double g_coefficient = 1.0;
};

namespace detail {

/// Positions in the canonical degree-2 basis that are active for (M1, M2).
inline std::vector<int> active_columns(int m1, int m2) {
  const int m = std::max(m1, m2);
  const auto tuples = lag_index_tuples(2, m);
  std::vector<int> cols;
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    const auto& idx = tuples[t];
    if ((idx.size() == 1 && idx[0] < m1) || (idx.size() == 2 && idx[1] < m2)) cols.push_back(static_cast<int>(t));
  }
  return cols;
}

struct AdaptationData {
  Eigen::MatrixXd features;  // active basis, rows n = M-1 .. len-1
  Eigen::VectorXd target;
  std::vector<int> cols;
  int memory = 0;
};

inline AdaptationData adaptation_data(std::span<const double> x, std::span<const double> y, int m1, int m2) {
  if (x.size() != y.size()) throw LengthMismatch("input and desired sequences differ in length");
  if (m1 < 0 || m2 < 0 || std::max(m1, m2) < 1) throw DimensionMismatch("invalid memory depths");
  AdaptationData d;
  d.memory = std::max(m1, m2);
  d.cols = active_columns(m1, m2);
  if (x.size() < static_cast<std::size_t>(d.memory)) throw SignalTooShort("signal shorter than memory");
  const Eigen::MatrixXd full = lag_design_matrix(x, 2, d.memory);
  if (full.rows() <= static_cast<Eigen::Index>(d.cols.size()) + 1)
    throw InsufficientData("usable samples (" + std::to_string(full.rows()) + ") must exceed coefficient count (" +
                           std::to_string(d.cols.size() + 1) + ")");
  d.features.resize(full.rows(), static_cast<Eigen::Index>(d.cols.size()));
  for (std::size_t c = 0; c < d.cols.size(); ++c) d.features.col(static_cast<Eigen::Index>(c)) = full.col(d.cols[c]);
  d.target = Eigen::Map<const Eigen::VectorXd>(y.data() + d.memory - 1, full.rows());
  return d;
}

inline VolterraKernels kernels_from_active(double h0, const Eigen::VectorXd& h, const AdaptationData& d, int m1,
                                           int m2) {
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis_size(2, d.memory)) + 1);
  flat(0) = h0;
  for (std::size_t c = 0; c < d.cols.size(); ++c) flat(d.cols[c] + 1) = h(static_cast<Eigen::Index>(c));
  return coefficients_to_kernels(flat, m1, m2);
}

inline double condition_of(const Eigen::MatrixXd& a) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

inline Eigen::VectorXd solve_refined(const Eigen::MatrixXd& a, const Eigen::VectorXd& r) {
  const auto ldlt = a.ldlt();
  Eigen::VectorXd h = ldlt.solve(r);
  h += ldlt.solve(r - a * h);  // one step of iterative refinement
  return h;
}

inline double relative_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& h, const Eigen::VectorXd& r) {
  const double denom = a.norm() * h.norm() + r.norm();
  return denom > 0.0 ? (a * h - r).norm() / denom : 0.0;
}

inline double mse_of(const Eigen::MatrixXd& f, const Eigen::VectorXd& y, double h0, const Eigen::VectorXd& h) {
  return ((y - f * h).array() - h0).square().mean();
}

inline constexpr double kSingularRcond = 1e-13;

}  // namespace detail

/// MMSE kernels from the normal equations C h = r of the flattened basis
/// (constant column included); `ridge` adds lambda I to the non-constant block.
[[nodiscard]] inline AdaptationReport mmse_adapt(std::span<const double> x, std::span<const double> y, int m1, int m2,
                                                 double ridge = 0.0) {
  if (!(ridge >= 0.0)) throw InvalidShape("ridge must be >= 0");
  const auto d = detail::adaptation_data(x, y, m1, m2);
  const Eigen::Index n = d.features.rows();
  const Eigen::Index p = d.features.cols() + 1;
  Eigen::MatrixXd phi(n, p);
  phi.col(0).setOnes();
  phi.rightCols(p - 1) = d.features;
  Eigen::MatrixXd c = (phi.transpose() * phi) / static_cast<double>(n);
  const Eigen::VectorXd r = (phi.transpose() * d.target) / static_cast<double>(n);
  c.diagonal().tail(p - 1).array() += ridge;
  AdaptationReport rep;
  rep.method = AdaptationMethod::mmse;
  rep.condition = detail::condition_of(c);
  if (ridge == 0.0 && !(rep.condition < 1.0 / detail::kSingularRcond))
    throw SingularSystem("input moment matrix is rank deficient (condition " + std::to_string(rep.condition) + ")");
  const Eigen::VectorXd h = detail::solve_refined(c, r);
  rep.normal_equation_residual = detail::relative_residual(c, h, r);
  rep.kernels = detail::kernels_from_active(h(0), h.tail(p - 1), d, m1, m2);
  rep.residual_mse = detail::mse_of(d.features, d.target, h(0), h.tail(p - 1));
  rep.samples = static_cast<std::size_t>(n);
  return rep;
}

/// Moment-based adaptation. First solves F h = b with F the centered
/// correlant matrix of the flattened basis and b the centered cross-correlant
/// vector Cov(phi, y); the offset follows from the means. When the error
/// class is asymmetric (shape gamma3 != 0), the kernels are then refined by
/// the PMM2 estimating equations with weights from `shape`, which describes
/// the cumulants of the prediction error; with no shape given it is estimated
/// from the first-stage residuals.
[[nodiscard]] inline AdaptationReport moment_adapt(std::span<const double> x, std::span<const double> y, int m1,
                                                   int m2, const std::optional<CumulantSet>& shape = std::nullopt,
                                                   double ridge = 0.0) {
  if (!(ridge >= 0.0)) throw InvalidShape("ridge must be >= 0");
  const auto d = detail::adaptation_data(x, y, m1, m2);
  auto cm = compute_correlant_matrix(d.features);
  cm.F.diagonal().array() += ridge;
  if (ridge > 0.0) cm = detail::finish_correlants(cm.F, cm.psi);
  detail::require_nondegenerate(cm);
  const Eigen::VectorXd b = centered_cross_correlants(d.features, d.target);
  Eigen::VectorXd h = detail::solve_refined(cm.F, b);
  double h0 = d.target.mean() - h.dot(cm.psi);

  AdaptationReport rep;
  rep.method = AdaptationMethod::moment;
  rep.condition = detail::condition_of(cm.F);
  rep.normal_equation_residual = detail::relative_residual(cm.F, h, b);
  rep.samples = static_cast<std::size_t>(d.features.rows());

  const Eigen::VectorXd resid = (d.target - d.features * h).array() - h0;
  std::optional<CumulantSet> cls = shape;
  if (!cls) {
    try {
      cls = sample_cumulants(std::span<const double>(resid.data(), static_cast<std::size_t>(resid.size())), 4);
    } catch (const DegenerateSample&) {
      cls.reset();  // exact fit: nothing to refine
    }
  }
  if (cls && cls->order() >= 4 && cls->c3() != 0.0 && ridge == 0.0) {
    // The error shape is supplied dimensionless; c2 is taken from the residuals.
    const double c2 = resid.array().square().mean();
    if (c2 > 0.0) {
      const auto err = CumulantSet::from_shape(c2, cls->gamma3(), cls->gamma4());
      const Eigen::Index p = d.features.cols() + 1;
      Eigen::MatrixXd phi(d.features.rows(), p);
      phi.col(0).setOnes();
      phi.rightCols(p - 1) = d.features;
      Eigen::VectorXd init(p);
      init << h0, h;
      const auto est = pmm2_refine(LinearResponse{static_cast<int>(p)}, phi, d.target, init, err);
      h0 = est.theta_hat(0);
      h = est.theta_hat.tail(p - 1);
      rep.g_coefficient = est.g_coefficient;
    }
  }
  rep.kernels = detail::kernels_from_active(h0, h, d, m1, m2);
  rep.residual_mse = detail::mse_of(d.features, d.target, h0, h);
  return rep;
}

}  // namespace polyest
