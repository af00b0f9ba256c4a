#pragma once

// Stochastic polynomials: basis families, the matrix of centered correlants
// F_{ij} = Psi_{ij} - Psi_i Psi_j, its determinant, and the polynomial
// variance quadratic form.

#include <polyest/errors.hpp>
#include <polyest/moments.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace polyest {

enum class BasisKind { power, lag_products };

/// Relative Gram-determinant threshold: F is declared degenerate when
/// det(F) <= kDegeneracyTolerance * prod(diag F).
inline constexpr double kDegeneracyTolerance = 1e-10;

/// Number of monomials x[n-i1]...x[n-ip], p = 1..N, 0 <= i1 <= ... <= ip < M:
/// sum_p C(M+p-1, p).
[[nodiscard]] inline std::uint64_t basis_size(int degree, int memory) {
  if (degree < 1 || memory < 1) throw DimensionMismatch("basis_size needs N >= 1 and M >= 1");
  std::uint64_t total = 0;
  for (int p = 1; p <= degree; ++p) {
    // C(M+p-1, p) built incrementally; each partial product is itself a binomial.
    std::uint64_t c = 1;
    for (int i = 1; i <= p; ++i) c = c * static_cast<std::uint64_t>(memory - 1 + i) / static_cast<std::uint64_t>(i);
    total += c;
  }
  return total;
}

/// A basis {phi_i}. Power: phi_i(xi) = xi^i, i = 1..degree. Lag products:
/// monomials of the lag window ordered by degree p ascending, then
/// lexicographically by the nondecreasing lag tuple (i1, ..., ip).
struct BasisFamily {
  BasisKind kind = BasisKind::power;
  int degree = 1;
  int memory = 1;

  static BasisFamily power(int degree) {
    if (degree < 1) throw DimensionMismatch("power basis degree must be >= 1");
    return {BasisKind::power, degree, 1};
  }
  static BasisFamily lag_products(int degree, int memory) {
    if (degree < 1 || memory < 1) throw DimensionMismatch("lag-product basis needs N >= 1, M >= 1");
    return {BasisKind::lag_products, degree, memory};
  }

  [[nodiscard]] int size() const {
    return kind == BasisKind::power ? degree : static_cast<int>(basis_size(degree, memory));
  }
};

/// Lag tuples of the lag-product basis in its canonical order.
[[nodiscard]] inline std::vector<std::vector<int>> lag_index_tuples(int degree, int memory) {
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(basis_size(degree, memory)));
  for (int p = 1; p <= degree; ++p) {
    std::vector<int> t(static_cast<std::size_t>(p), 0);
    while (true) {
      out.push_back(t);
      // next nondecreasing tuple in lexicographic order
      int k = p - 1;
      while (k >= 0 && t[static_cast<std::size_t>(k)] == memory - 1) --k;
      if (k < 0) break;
      const int v = t[static_cast<std::size_t>(k)] + 1;
      for (int j = k; j < p; ++j) t[static_cast<std::size_t>(j)] = v;
    }
  }
  return out;
}

/// Lag-product basis evaluated on the window ending at sample n.
[[nodiscard]] inline Eigen::VectorXd expand_lag_basis(std::span<const double> signal, int degree, int memory,
                                                      std::ptrdiff_t n) {
  if (degree < 1 || memory < 1) throw DimensionMismatch("lag-product basis needs N >= 1, M >= 1");
  if (n < memory - 1 || n >= static_cast<std::ptrdiff_t>(signal.size()))
    throw IndexOutOfWindow("index " + std::to_string(n) + " has no full lag window of length " +
                           std::to_string(memory) + " in a signal of length " + std::to_string(signal.size()));
  const auto tuples = lag_index_tuples(degree, memory);
  Eigen::VectorXd phi(static_cast<Eigen::Index>(tuples.size()));
  for (std::size_t k = 0; k < tuples.size(); ++k) {
    double v = 1.0;
    for (int lag : tuples[k]) v *= signal[static_cast<std::size_t>(n - lag)];
    phi(static_cast<Eigen::Index>(k)) = v;
  }
  return phi;
}

/// Rows are observations of the lag-product basis at n = M-1 .. len-1.
[[nodiscard]] inline Eigen::MatrixXd lag_design_matrix(std::span<const double> signal, int degree, int memory) {
  if (signal.size() < static_cast<std::size_t>(memory))
    throw IndexOutOfWindow("signal shorter than memory depth");
  const auto tuples = lag_index_tuples(degree, memory);
  const auto rows = static_cast<Eigen::Index>(signal.size()) - memory + 1;
  Eigen::MatrixXd d(rows, static_cast<Eigen::Index>(tuples.size()));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t n = static_cast<std::size_t>(r + memory - 1);
    for (std::size_t k = 0; k < tuples.size(); ++k) {
      double v = 1.0;
      for (int lag : tuples[k]) v *= signal[n - static_cast<std::size_t>(lag)];
      d(r, static_cast<Eigen::Index>(k)) = v;
    }
  }
  return d;
}

/// The body F_S of a stochastic polynomial with basis means Psi_i and body
/// volume det(F_S).
struct CorrelantMatrix {
  Eigen::MatrixXd F;
  Eigen::VectorXd psi;
  double det = 0.0;
  /// det(F) / prod(diag F); equals 1 for uncorrelated basis functions.
  double normalized_det = 0.0;

  [[nodiscard]] int size() const { return static_cast<int>(F.rows()); }
  [[nodiscard]] bool degenerate() const { return !(normalized_det > kDegeneracyTolerance); }
};

namespace detail {

inline CorrelantMatrix finish_correlants(Eigen::MatrixXd F, Eigen::VectorXd psi) {
  F = 0.5 * (F + F.transpose());
  CorrelantMatrix cm;
  const Eigen::VectorXd d = F.diagonal();
  double prod = 1.0;
  bool positive_diag = true;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    positive_diag = positive_diag && d(i) > 0.0;
    prod *= d(i);
  }
  if (positive_diag) {
    const Eigen::VectorXd s = d.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd R = s.asDiagonal() * F * s.asDiagonal();
    cm.normalized_det = R.partialPivLu().determinant();
    cm.det = cm.normalized_det * prod;
  } else {
    cm.normalized_det = 0.0;
    cm.det = F.size() ? F.partialPivLu().determinant() : 0.0;
  }
  cm.F = std::move(F);
  cm.psi = std::move(psi);
  return cm;
}

inline void require_nondegenerate(const CorrelantMatrix& cm) {
  if (cm.degenerate())
    throw DegenerateCorrelantMatrix("body volume det(F) = " + std::to_string(cm.det) +
                                    " is not positive (normalized " + std::to_string(cm.normalized_det) + ")");
}

}  // namespace detail

/// Centered correlants of a power basis from raw moments: Psi_{ij} = alpha_{i+j},
/// F_{ij} = alpha_{i+j} - alpha_i alpha_j. Does not check degeneracy.
[[nodiscard]] inline CorrelantMatrix compute_correlant_matrix(const BasisFamily& basis,
                                                              const InitialMomentVector& moments) {
  if (basis.kind != BasisKind::power)
    throw DimensionMismatch("lag-product bases take an empirical design, not raw moments");
  const int S = basis.degree;
  if (moments.order() < 2 * S)
    throw OrderUnavailable("power basis of degree " + std::to_string(S) + " needs raw moments up to order " +
                           std::to_string(2 * S));
  Eigen::MatrixXd F(S, S);
  Eigen::VectorXd psi(S);
  for (int i = 1; i <= S; ++i) {
    psi(i - 1) = moments.alpha(i);
    for (int j = 1; j <= S; ++j) F(i - 1, j - 1) = moments.alpha(i + j) - moments.alpha(i) * moments.alpha(j);
  }
  return detail::finish_correlants(std::move(F), std::move(psi));
}

/// Empirical centered correlants of basis observations (rows = samples).
[[nodiscard]] inline CorrelantMatrix compute_correlant_matrix(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw InsufficientData("need at least two observations");
  Eigen::VectorXd psi = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - psi.transpose();
  Eigen::MatrixXd F = (centered.transpose() * centered) / static_cast<double>(features.rows());
  return detail::finish_correlants(std::move(F), std::move(psi));
}

/// As compute_correlant_matrix, raising DegenerateCorrelantMatrix when the
/// body volume is not positive.
[[nodiscard]] inline CorrelantMatrix build_correlant_matrix(const BasisFamily& basis,
                                                            const InitialMomentVector& moments) {
  auto cm = compute_correlant_matrix(basis, moments);
  detail::require_nondegenerate(cm);
  return cm;
}

[[nodiscard]] inline CorrelantMatrix build_correlant_matrix(const Eigen::MatrixXd& features) {
  auto cm = compute_correlant_matrix(features);
  detail::require_nondegenerate(cm);
  return cm;
}

/// Lag-product basis with time-averaged moments over the observed window.
[[nodiscard]] inline CorrelantMatrix build_correlant_matrix(const BasisFamily& basis,
                                                            std::span<const double> signal) {
  if (basis.kind == BasisKind::power) {
    Eigen::MatrixXd d(static_cast<Eigen::Index>(signal.size()), basis.degree);
    for (std::size_t r = 0; r < signal.size(); ++r) {
      double p = signal[r];
      for (int i = 0; i < basis.degree; ++i, p *= signal[r]) d(static_cast<Eigen::Index>(r), i) = p;
    }
    return build_correlant_matrix(d);
  }
  return build_correlant_matrix(lag_design_matrix(signal, basis.degree, basis.memory));
}

/// Centered cross-correlants Cov(phi_i, y) for basis observations and a target.
[[nodiscard]] inline Eigen::VectorXd centered_cross_correlants(const Eigen::MatrixXd& features,
                                                               const Eigen::VectorXd& y) {
  if (features.rows() != y.size()) throw DimensionMismatch("feature rows and target length differ");
  const Eigen::RowVectorXd mean = features.colwise().mean();
  const double ybar = y.mean();
  return ((features.rowwise() - mean).transpose() * (y.array() - ybar).matrix()) /
         static_cast<double>(features.rows());
}

/// eta = h0 + sum_i h_i phi_i.
struct StochasticPolynomial {
  double h0 = 0.0;
  Eigen::VectorXd h;
  BasisFamily basis = BasisFamily::power(1);

  StochasticPolynomial() = default;
  StochasticPolynomial(double offset, Eigen::VectorXd coefficients, BasisFamily family)
      : h0(offset), h(std::move(coefficients)), basis(family) {
    if (!std::isfinite(h0) || !h.allFinite()) throw InvalidShape("polynomial coefficients must be finite");
    if (h.size() != basis.size()) throw DimensionMismatch("coefficient count differs from basis size");
  }

  /// Value of a power polynomial at xi.
  [[nodiscard]] double operator()(double xi) const {
    if (basis.kind != BasisKind::power) throw DimensionMismatch("scalar evaluation needs a power basis");
    double v = h0;
    double p = xi;
    for (Eigen::Index i = 0; i < h.size(); ++i, p *= xi) v += h(i) * p;
    return v;
  }
};

/// sigma_eta^2 = h^T F h; the offset h0 carries no variance.
[[nodiscard]] inline double polynomial_variance(const StochasticPolynomial& poly, const CorrelantMatrix& cm) {
  if (poly.h.size() != cm.F.rows())
    throw DimensionMismatch("polynomial degree " + std::to_string(poly.h.size()) + " vs correlant size " +
                            std::to_string(cm.F.rows()));
  return std::max(0.0, poly.h.dot(cm.F * poly.h));
}

}  // namespace polyest
