#include "robustkit/convexopt.hpp"
#include "robustkit/oracles.hpp"

#include <gtest/gtest.h>

using namespace robustkit;

namespace {

Matrix random_symmetric(Rng& rng, Eigen::Index n) {
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.normal();
  return a;
}

ProductDistribution random_means(Rng& rng, Eigen::Index n) {
  Vector m(n);
  for (Eigen::Index i = 0; i < n; ++i) m[i] = rng.uniform(0.01, 2.0 / 3.0);
  return ProductDistribution(m);
}

}  // namespace

TEST(SeparationOracle, ZeroIsFeasible) {
  EXPECT_FALSE(separation_oracle(Matrix::Zero(3, 3), ProductDistribution(Vector::Constant(3, 0.5))));
}

TEST(SeparationOracle, IdentityViolatesTrace) {
  const ProductDistribution mu(Vector::Constant(3, 2.0 / 3.0));
  const auto v = separation_oracle(Matrix::Identity(3, 3), mu);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(v->constraint, CertificateConstraint::weighted_trace);
  EXPECT_GT(v->normal.cwiseProduct(Matrix::Identity(3, 3)).sum(), v->offset);
}

TEST(SeparationOracle, EachConstraintSeparates) {
  const ProductDistribution mu(Vector::Constant(2, 0.1));
  Matrix not_psd(2, 2);
  not_psd << 0, 0.5, 0.5, 0;
  Matrix box(2, 2);
  box << 2, 0, 0, 0;
  const std::pair<Matrix, CertificateConstraint> cases[] = {
      {not_psd, CertificateConstraint::psd}, {box, CertificateConstraint::box}};
  for (const auto& [m, want] : cases) {
    const auto v = separation_oracle(m, mu);
    ASSERT_TRUE(v.has_value());
    EXPECT_EQ(v->constraint, want);
    EXPECT_GT(v->normal.cwiseProduct(m).sum(), v->offset);
  }
  EXPECT_THROW(separation_oracle((Matrix(2, 2) << 0, 1, 0, 0).finished(), mu), InvalidArgument);
}

TEST(SeparationOracle, HyperplaneValidOnRandomInfeasible) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 4;
    const auto mu = random_means(rng, n);
    const Matrix m = random_symmetric(rng, n) * rng.uniform(0.1, 3.0);
    const auto v = separation_oracle(m, mu);
    if (!v) {
      EXPECT_TRUE(is_certificate(m, mu));
      continue;
    }
    EXPECT_GT(v->normal.cwiseProduct(m).sum(), v->offset);
    // A feasible point must lie on the other side.
    const Vector y = vector_dual_norm(Vector::Ones(n), mu).witness;
    EXPECT_LE(v->normal.cwiseProduct(y * y.transpose()).sum(), v->offset + 1e-9);
  }
}

TEST(SeparationOracle, RankOneFeasible) {
  Rng rng(22);
  const auto mu = random_means(rng, 5);
  const Vector y = vector_dual_norm(Vector::LinSpaced(5, -1, 1), mu).witness;
  EXPECT_FALSE(separation_oracle(y * y.transpose(), mu));
}

TEST(Projections, AreIdempotentAndFeasible) {
  Rng rng(23);
  const Eigen::Index n = 4;
  const auto mu = random_means(rng, n);
  const Vector& m = mu.means();
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = random_symmetric(rng, n) * 2.0;
    const Matrix f = detail::project_weighted_frobenius(z, m);
    EXPECT_LE(weighted_frobenius_sq(f, m), 1.0 + 1e-9);
    EXPECT_NEAR((detail::project_weighted_frobenius(f, m) - f).norm(), 0.0, 1e-9);
    const Matrix r = detail::project_row_sup(z, m);
    EXPECT_LE(row_sup(r, m), 1.0 + 1e-9);
    EXPECT_NEAR((detail::project_row_sup(r, m) - r).norm(), 0.0, 1e-9);
    const Matrix t = detail::project_weighted_trace(z, m);
    EXPECT_LE(weighted_trace(t, m), 1.0 + 1e-12);
    EXPECT_GE(min_eigenvalue(detail::project_psd(z)), -1e-12);
    // Projection is closer than any other feasible point tried.
    const Vector y = vector_dual_norm(z.col(0), mu).witness;
    const Matrix other = y * y.transpose();
    EXPECT_LE((z - f).norm(), (z - other).norm() + 1e-9);
    EXPECT_LE((z - r).norm(), (z - other).norm() + 1e-9);
  }
}

TEST(MaximizeCertificate, ZeroObjective) {
  const auto r = maximize_certificate(Matrix::Zero(3, 3), ProductDistribution(Vector::Constant(3, 0.3)));
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.certificate.isZero(0.0));
}

TEST(MaximizeCertificate, DominatesRankOneCandidate) {
  Rng rng(24);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 5;
    const auto mu = random_means(rng, n);
    Vector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
    x = vector_dual_norm(x, mu).witness;
    const Matrix a = x * x.transpose();
    const auto r = maximize_certificate(a, mu);
    EXPECT_GE(r.value + 1e-12, a.cwiseProduct(x * x.transpose()).sum());
    EXPECT_GE(r.value, r.warm_start_value);
  }
}

TEST(MaximizeCertificate, FeasibleMonotoneDeterministic) {
  Rng rng(25);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(6));
    const auto mu = random_means(rng, n);
    const Matrix a = random_symmetric(rng, n);
    SolverConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto r = maximize_certificate(a, mu, cfg);
    EXPECT_FALSE(separation_oracle(r.certificate, mu).has_value());
    EXPECT_NEAR(r.value, a.cwiseProduct(r.certificate).sum(), 1e-12 * (1.0 + std::abs(r.value)));
    for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_GE(r.history[i], r.history[i - 1]);
    const auto again = maximize_certificate(a, mu, cfg);
    EXPECT_EQ(again.value, r.value);
    EXPECT_TRUE(again.certificate == r.certificate);
  }
}

TEST(MaximizeCertificate, CloseToBruteForceOn3x3) {
  Rng rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = random_means(rng, 3);
    const Matrix a = random_symmetric(rng, 3);
    const double ref = oracles::matrix_sup_bruteforce(a, mu.means(), 1000 + trial);
    const double got = maximize_certificate(a, mu).value;
    EXPECT_GE(got, 0.9 * ref) << "trial " << trial;
    EXPECT_LE(got, 1.05 * ref + 1e-9) << "trial " << trial;
  }
}

TEST(SolverConfig, Validation) {
  SolverConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.rel_gap_target = 1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}
