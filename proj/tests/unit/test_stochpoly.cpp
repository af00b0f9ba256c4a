#include <polyest/distributions.hpp>
#include <polyest/stochpoly.hpp>

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

using namespace polyest;

namespace {

std::uint64_t binom(int n, int k) {
  std::uint64_t c = 1;
  for (int i = 1; i <= k; ++i) c = c * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return c;
}

}  // namespace

TEST(CorrelantMatrix, StandardNormalDegreeTwo) {
  const auto cm = build_correlant_matrix(BasisFamily::power(2), InitialMomentVector({0, 1, 0, 3}));
  EXPECT_DOUBLE_EQ(cm.F(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(cm.F(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(cm.F(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(cm.F(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(cm.det, 2.0);
}

TEST(CorrelantMatrix, DegreeOneIsVariance) {
  const double mean = 1.5, v = 0.7;
  const auto cm = build_correlant_matrix(BasisFamily::power(1), InitialMomentVector({mean, v + mean * mean}));
  EXPECT_NEAR(cm.F(0, 0), v, 1e-15);
  EXPECT_NEAR(cm.det, v, 1e-15);
}

TEST(CorrelantMatrix, PointMassIsDegenerate) {
  const double mu = 2.0;
  const InitialMomentVector a({mu, mu * mu, mu * mu * mu, mu * mu * mu * mu});
  EXPECT_THROW((void)build_correlant_matrix(BasisFamily::power(2), a), DegenerateCorrelantMatrix);
  EXPECT_TRUE(compute_correlant_matrix(BasisFamily::power(2), a).degenerate());
}

TEST(CorrelantMatrix, MissingMomentsAreUnavailable) {
  EXPECT_THROW((void)build_correlant_matrix(BasisFamily::power(2), InitialMomentVector({0, 1, 0})),
               OrderUnavailable);
}

TEST(CorrelantMatrix, AffineCoherence) {
  // Centered power basis: scaling by a multiplies F11, F12, F22 by a^2, a^3, a^4.
  const CumulantSet c({1.3, 0.8, 2.1});
  const auto base = build_correlant_matrix(BasisFamily::power(2), raw_moments_from_cumulants(c, 0.0, 4));
  for (double a : {2.0, -0.5, 3.0}) {
    const CumulantSet s({a * a * c.c2(), a * a * a * c.c3(), a * a * a * a * c.c4()});
    const auto cm = build_correlant_matrix(BasisFamily::power(2), raw_moments_from_cumulants(s, 0.0, 4));
    EXPECT_NEAR(cm.F(0, 0), a * a * base.F(0, 0), 1e-12 * std::abs(cm.F(0, 0)));
    EXPECT_NEAR(cm.F(0, 1), a * a * a * base.F(0, 1), 1e-12 * std::abs(cm.F(0, 1)));
    EXPECT_NEAR(cm.F(1, 1), a * a * a * a * base.F(1, 1), 1e-12 * std::abs(cm.F(1, 1)));
  }
}

TEST(CorrelantMatrix, GramLawOnRandomSamples) {
  // Empirical F is PSD and its volume is positive iff the design has full column rank.
  Rng rng = make_rng(21);
  std::uniform_int_distribution<int> support(1, 5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const int distinct = support(rng);
    std::vector<double> atoms(static_cast<std::size_t>(distinct));
    for (auto& v : atoms) v = nd(rng);
    std::uniform_int_distribution<int> pick(0, distinct - 1);
    const int n = 12;
    Eigen::MatrixXd d(n, 3);
    for (int r = 0; r < n; ++r) {
      const double x = atoms[static_cast<std::size_t>(pick(rng))];
      d(r, 0) = x;
      d(r, 1) = x * x;
      d(r, 2) = x * x * x;
    }
    const auto cm = compute_correlant_matrix(d);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cm.F);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()));
    // Rank of the centered design (constant column removed by centering).
    Eigen::MatrixXd centered = d.rowwise() - d.colwise().mean();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centered);
    qr.setThreshold(1e-9);
    const bool full_rank = qr.rank() == 3;
    EXPECT_EQ(!cm.degenerate(), full_rank) << "distinct atoms " << distinct;
  }
}

TEST(PolynomialVariance, QuadraticForm) {
  CorrelantMatrix cm;
  cm.F = Eigen::Matrix2d{{1.0, 0.0}, {0.0, 2.0}};
  const auto b = BasisFamily::power(2);
  EXPECT_DOUBLE_EQ(polynomial_variance(StochasticPolynomial(0.0, Eigen::Vector2d(1, 0), b), cm), 1.0);
  EXPECT_DOUBLE_EQ(polynomial_variance(StochasticPolynomial(5.0, Eigen::Vector2d(0, 0), b), cm), 0.0);
  EXPECT_DOUBLE_EQ(polynomial_variance(StochasticPolynomial(0.0, Eigen::Vector2d(1, 1), b), cm), 3.0);
}

TEST(PolynomialVariance, MatchesMonteCarlo) {
  const auto lc = analytic_cumulants(ChiSquare{3.0});
  const auto cm = build_correlant_matrix(BasisFamily::power(2), raw_moments_from_cumulants(lc, 4));
  const StochasticPolynomial p(0.3, Eigen::Vector2d(0.7, -0.05), BasisFamily::power(2));
  Rng rng = make_rng(3);
  const auto x = draw_n(ChiSquare{3.0}, 400000, rng);
  double s = 0.0, s2 = 0.0;
  for (double v : x) {
    const double e = p(v);
    s += e;
    s2 += e * e;
  }
  const double n = static_cast<double>(x.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(var / polynomial_variance(p, cm), 1.0, 0.02);
}

TEST(StochasticPolynomial, RejectsNonFiniteOrWrongSize) {
  EXPECT_THROW(StochasticPolynomial(0.0, Eigen::Vector2d(1, NAN), BasisFamily::power(2)), InvalidShape);
  EXPECT_THROW(StochasticPolynomial(0.0, Eigen::Vector3d(1, 1, 1), BasisFamily::power(2)), DimensionMismatch);
}

TEST(BasisSize, Examples) {
  EXPECT_EQ(basis_size(2, 3), 9u);
  EXPECT_EQ(basis_size(1, 5), 5u);
  EXPECT_EQ(basis_size(3, 2), 9u);
  EXPECT_THROW((void)basis_size(0, 3), DimensionMismatch);
}

TEST(BasisSize, QuadraticClosedFormUpTo32) {
  for (int m = 1; m <= 32; ++m) {
    const std::uint64_t closed = static_cast<std::uint64_t>(m + m * (m + 1) / 2);
    EXPECT_EQ(basis_size(2, m), closed);
    EXPECT_EQ(lag_index_tuples(2, m).size(), closed);
  }
}

TEST(BasisSize, MatchesBinomialSum) {
  for (int n = 1; n <= 4; ++n)
    for (int m = 1; m <= 8; ++m) {
      std::uint64_t sum = 0;
      for (int p = 1; p <= n; ++p) sum += binom(m + p - 1, p);
      EXPECT_EQ(basis_size(n, m), sum);
    }
}

TEST(ExpandLagBasis, Examples) {
  const std::vector<double> s{1, 2, 3};
  const auto a = expand_lag_basis(s, 1, 2, 2);
  ASSERT_EQ(a.size(), 2);
  EXPECT_EQ(a(0), 3);
  EXPECT_EQ(a(1), 2);

  const std::vector<double> t{1, 2};
  const auto b = expand_lag_basis(t, 2, 2, 1);
  const std::vector<double> expect{2, 1, 4, 2, 1};
  ASSERT_EQ(b.size(), 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(b(i), expect[static_cast<std::size_t>(i)]);
}

TEST(ExpandLagBasis, IndexOutsideWindow) {
  const std::vector<double> s{1, 2, 3, 4};
  EXPECT_THROW((void)expand_lag_basis(s, 2, 3, 1), IndexOutOfWindow);
  EXPECT_THROW((void)expand_lag_basis(s, 2, 3, 4), IndexOutOfWindow);
}

TEST(LagDesignMatrix, RowsMatchExpansion) {
  const std::vector<double> s{0.5, -1.0, 2.0, 0.25, 3.0};
  const auto d = lag_design_matrix(s, 2, 3);
  ASSERT_EQ(d.rows(), 3);
  for (Eigen::Index r = 0; r < d.rows(); ++r)
    EXPECT_TRUE(d.row(r).transpose().isApprox(expand_lag_basis(s, 2, 3, r + 2)));
}
