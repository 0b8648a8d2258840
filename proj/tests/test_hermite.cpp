#include "test_support.hpp"

#include <limits>
#include <numbers>
#include <sstream>

using namespace vpnet;
using namespace vpnet::testing;

namespace {

// Oracle: physicists' polynomials H_k by their defining recurrence with the
// factorial normalization, in long double. Independent of the normalized
// recurrence used by the library; fine for small k.
long double oracle_hermite_function(int k, long double t) {
  long double h_prev = 1.0L, h = 2.0L * t;
  if (k == 0) h = 1.0L;
  for (int j = 1; j < k; ++j) {
    const long double next = 2.0L * t * h - 2.0L * j * h_prev;
    h_prev = h;
    h = next;
  }
  long double fact = 1.0L;
  for (int j = 2; j <= k; ++j) fact *= j;
  const long double norm = std::sqrt(std::sqrt(std::numbers::pi_v<long double>) * std::pow(2.0L, k) * fact);
  return h * std::exp(-t * t / 2.0L) / norm;
}

// Composite Simpson quadrature of Phi_j Phi_k over [-L, L] with the oracle.
long double oracle_inner_product(int j, int k, long double L, int intervals) {
  const long double h = 2.0L * L / intervals;
  long double sum = 0.0L;
  for (int i = 0; i <= intervals; ++i) {
    const long double t = -L + h * i;
    const long double w = (i == 0 || i == intervals) ? 1.0L : (i % 2 ? 4.0L : 2.0L);
    sum += w * oracle_hermite_function(j, t) * oracle_hermite_function(k, t);
  }
  return sum * h / 3.0L;
}

}  // namespace

TEST(SampleGrid, RejectsInvalidGrids) {
  EXPECT_THROW(SampleGrid({0.0}, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(SampleGrid({0.0, 0.0}, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(SampleGrid({1.0, 0.0}, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(SampleGrid({0.0, 1.0, 2.5}, 0.0, 3.0), InvalidArgument);
  EXPECT_THROW(SampleGrid({0.0, 1.0}, 0.5, 1.0), InvalidArgument);
  EXPECT_NO_THROW(SampleGrid({0.0, 1.0, 2.0}, -1.0, 3.0));
}

TEST(SampleGrid, UniformAndIndexGrids) {
  const SampleGrid g = SampleGrid::index(5);
  EXPECT_EQ(g.size(), 5u);
  EXPECT_DOUBLE_EQ(g.spacing(), 1.0);
  EXPECT_DOUBLE_EQ(g.a(), 0.0);
  EXPECT_DOUBLE_EQ(g.b(), 4.0);
  const SampleGrid u = SampleGrid::uniform(2001, -10.0, 10.0);
  EXPECT_NEAR(u.spacing(), 0.01, 1e-15);
  EXPECT_EQ(u.points().back(), 10.0);
}

TEST(ClassicalHermite, ValuesAtZero) {
  const SampleGrid g({-1.0, 0.0, 1.0}, -1.0, 1.0);
  const Matrix phi = classical_hermite(g, 2);
  EXPECT_NEAR(phi(1, 0), 0.75112554446494248, 1e-15);
  EXPECT_NEAR(std::pow(std::numbers::pi, -0.25), phi(1, 0), 1e-15);
  EXPECT_EQ(phi(1, 1), 0.0);
}

TEST(ClassicalHermite, MatchesFactorialOracle) {
  const SampleGrid g = SampleGrid::uniform(401, -8.0, 8.0);
  const Matrix phi = classical_hermite(g, 20);
  for (Index k = 0; k < 20; ++k)
    for (Index i = 0; i < 401; i += 7) {
      const double expected = static_cast<double>(oracle_hermite_function(static_cast<int>(k), g.points()[i]));
      EXPECT_NEAR(phi(i, k), expected, 1e-12) << "k=" << k << " t=" << g.points()[i];
    }
}

TEST(ClassicalHermite, GramMatrixMatchesQuadrature) {
  const SampleGrid g = SampleGrid::uniform(2001, -10.0, 10.0);
  const Matrix phi = classical_hermite(g, 6) * std::sqrt(g.spacing());
  const Matrix gram = phi.transpose() * phi;
  for (int j = 0; j < 6; ++j)
    for (int k = 0; k < 6; ++k) {
      const double oracle = static_cast<double>(oracle_inner_product(j, k, 10.0L, 4000));
      EXPECT_NEAR(gram(j, k), oracle, 1e-6) << j << "," << k;
      EXPECT_NEAR(gram(j, k), j == k ? 1.0 : 0.0, 1e-6);
    }
}

TEST(ClassicalHermite, FiniteForHighOrderAndWideRange) {
  const SampleGrid g = SampleGrid::uniform(801, -40.0, 40.0);
  const Matrix phi = classical_hermite(g, 64);
  EXPECT_TRUE(phi.allFinite());
}

TEST(ClassicalHermite, RejectsZeroOrder) {
  EXPECT_THROW(classical_hermite(SampleGrid::index(10), 0), InvalidArgument);
  EXPECT_THROW(hermite_functions({}, 3), InvalidArgument);
}

TEST(AdaptiveHermite, IdentityParametersMatchClassical) {
  const SampleGrid g = SampleGrid::uniform(2001, -10.0, 10.0);
  const SampledBasis b = adaptive_hermite(g, 5, {0.0, 1.0});
  const Matrix expected = classical_hermite(g, 5) * std::sqrt(1.0 * g.spacing());
  EXPECT_LE((b.phi - expected).cwiseAbs().maxCoeff(), 1e-15);
  ASSERT_EQ(b.dphi.size(), 2u);
}

TEST(AdaptiveHermite, ScaleCovarianceIsExact) {
  const SampleGrid g = SampleGrid::index(300);
  const VpParams p{141.3, 0.083};
  const SampledBasis b = adaptive_hermite(g, 7, p);
  std::vector<double> s(g.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = p.lambda * (g.points()[i] - p.tau);
  const Matrix expected = hermite_functions(s, 7) * std::sqrt(p.lambda * g.spacing());
  EXPECT_TRUE(b.phi == expected);
}

TEST(AdaptiveHermite, WellConditionedInsideFeasibleRegion) {
  const SampleGrid g = SampleGrid::index(1000);
  const SampledBasis b = adaptive_hermite(g, 3, {500.0, 0.05});
  EXPECT_NEAR(condition_number(b.phi), 1.0, 1e-3);
}

TEST(AdaptiveHermite, RejectsNonPositiveLambda) {
  const SampleGrid g = SampleGrid::index(20);
  EXPECT_THROW(adaptive_hermite(g, 3, {10.0, 0.0}), InvalidArgument);
  EXPECT_THROW(adaptive_hermite(g, 3, {10.0, -1.0}), InvalidArgument);
  EXPECT_THROW(adaptive_hermite(g, 0, {10.0, 1.0}), InvalidArgument);
}

TEST(AdaptiveHermite, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = trial % 2 ? 200 : 50;
    const std::size_t n = std::array<std::size_t, 3>{3, 5, 8}[trial % 3];
    const SampleGrid g = SampleGrid::index(m);
    const VpParams p = random_feasible(rng, g.a(), g.b(), 6.0 / (g.b() - g.a()), 0.5);
    const SampledBasis b = adaptive_hermite(g, n, p);
    const Matrix fd_tau = central_difference([&](double t) { return adaptive_hermite(g, n, {t, p.lambda}).phi; }, p.tau);
    const Matrix fd_lam =
        central_difference([&](double l) { return adaptive_hermite(g, n, {p.tau, l}).phi; }, p.lambda);
    EXPECT_TRUE(close_relative(b.dphi[0], fd_tau, 1e-5, 1e-10)) << "tau=" << p.tau << " lambda=" << p.lambda;
    EXPECT_TRUE(close_relative(b.dphi[1], fd_lam, 1e-5, 1e-10)) << "tau=" << p.tau << " lambda=" << p.lambda;
  }
}

TEST(AdaptiveHermite, DiscreteOrthonormalityWithMargin) {
  // Support radius 3 * 1.05^(n-1) + 1 in scaled units plus 3 grid spacings;
  // lambda * h <= 0.5 keeps the sampling dense enough for the Riemann sum.
  std::mt19937_64 rng(5);
  for (std::size_t n : {1, 2, 3, 5, 8, 10}) {
    const std::size_t m = std::max<std::size_t>(100 * n, 200);
    const SampleGrid g = SampleGrid::index(m);
    const double radius = 3.0 * std::pow(1.05, static_cast<double>(n) - 1.0) + 1.0;
    for (int trial = 0; trial < 25; ++trial) {
      const VpParams p = random_feasible(rng, g.a(), g.b(), 2.0 * radius / (g.b() - g.a() - 6.0) * 1.01, 0.5,
                                         radius, 3.0 * g.spacing());
      const SampledBasis b = adaptive_hermite(g, n, p);
      EXPECT_LE(orthonormality_residual(b.phi), 1e-3) << "n=" << n << " tau=" << p.tau << " lambda=" << p.lambda;
    }
  }
}

TEST(AdaptiveHermite, DecaysOutsideSupport) {
  const SampleGrid g = SampleGrid::uniform(4001, -20.0, 20.0);
  const Matrix phi = classical_hermite(g, 12);
  for (Index k = 0; k < 12; ++k) {
    const double radius = 3.0 * std::pow(1.05, static_cast<double>(k)) + 5.0;
    const double peak = phi.col(k).cwiseAbs().maxCoeff();
    for (Index i = 0; i < phi.rows(); ++i)
      if (std::abs(g.points()[i]) >= radius) {
        EXPECT_LE(std::abs(phi(i, k)), 1e-6 * peak) << "k=" << k;
      }
  }
}

TEST(AdaptiveHermite, CheckedBasisReportsOrthonormality) {
  const SampleGrid g = SampleGrid::index(1000);
  EXPECT_TRUE(adaptive_hermite_checked(g, 3, {500.0, 0.05}, 1e-3).orthonormal);
  EXPECT_FALSE(adaptive_hermite_checked(g, 3, {990.0, 0.05}, 1e-3).orthonormal);
}

TEST(FeasibleRegion, Examples) {
  EXPECT_TRUE(feasible_region_check({500.0, 0.05}, 0.0, 999.0));
  EXPECT_FALSE(feasible_region_check({990.0, 0.05}, 0.0, 999.0));
  const double a = 0.0, b = 999.0;
  EXPECT_TRUE(feasible_region_check({(a + b) / 2.0, 6.0 / (b - a)}, a, b));
}

TEST(FeasibleRegion, Errors) {
  EXPECT_THROW(feasible_region_check({1.0, 0.0}, 0.0, 1.0), InvalidArgument);
  EXPECT_THROW(feasible_region_check({1.0, 1.0}, 1.0, 1.0), InvalidArgument);
}

TEST(ConditionNumber, Examples) {
  const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(*std::make_unique<std::mt19937_64>(3), 20, 4))
                       .householderQ() *
                   Matrix::Identity(20, 4);
  EXPECT_NEAR(condition_number(q), 1.0, 1e-12);
  Matrix dup(5, 2);
  dup.col(0) << 1, 2, 3, 4, 5;
  dup.col(1) = dup.col(0);
  EXPECT_EQ(condition_number(dup), std::numeric_limits<double>::infinity());
  EXPECT_THROW(condition_number(Matrix()), InvalidArgument);
  EXPECT_THROW(condition_number(Matrix::Zero(4, 2)), InvalidArgument);
}

TEST(ConditionNumber, OutsideFeasibleRegionIsIllConditioned) {
  const SampleGrid g = SampleGrid::index(1000);
  EXPECT_GT(condition_number(adaptive_hermite(g, 3, {1050.0, 0.012}).phi), 10.0);
  EXPECT_GT(condition_number(adaptive_hermite(g, 3, {1100.0, 0.02}).phi), 10.0);
}

TEST(ConditionSweep, RowsAndCsv) {
  const SampleGrid g = SampleGrid::index(1000);
  const std::vector<double> taus{500.0};
  const std::vector<double> lams{0.05};
  const auto rows = condition_sweep(g, 3, taus, lams);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].cond, 1.0, 1e-3);
  EXPECT_THROW(condition_sweep(g, 3, taus, std::vector<double>{}), InvalidArgument);

  const std::vector<double> t2{500.0, 1100.0};
  const std::vector<double> l2{0.012, 0.05};
  const auto grid = condition_sweep(g, 3, t2, l2);
  ASSERT_EQ(grid.size(), 4u);
  EXPECT_EQ(grid[1].tau, 500.0);
  EXPECT_EQ(grid[1].lambda, 0.05);
  EXPECT_EQ(grid[2].tau, 1100.0);

  std::ostringstream os;
  std::vector<ConditionSample> csv{{1.0, 0.5, 1.0000000001}, {2.0, 0.25, std::numeric_limits<double>::infinity()}};
  write_condition_csv(os, csv);
  EXPECT_EQ(os.str(), "tau,lambda,cond\n1,0.5,1.0000000001\n2,0.25,inf\n");
}
