#include "dmq/errors.hpp"
#include "dmq/linalg.hpp"
#include "dmq/rng.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace dmq;

namespace {

Matrix random_symmetric(int d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = n(rng);
  return a;
}

Matrix random_psd(int d, int rank, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix g(d, rank);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < rank; ++j) g(i, j) = n(rng);
  return g * g.transpose();
}

}  // namespace

TEST(SymMatrix, RejectsAsymmetricAndNonFinite) {
  Matrix a(2, 2);
  a << 1, 2, 2.1, 1;
  EXPECT_THROW(SymMatrix{a}, PreconditionError);
  a << 1, std::numeric_limits<double>::quiet_NaN(), 0, 1;
  EXPECT_THROW(SymMatrix{a}, InputError);
  EXPECT_THROW(SymMatrix{Matrix(2, 3)}, PreconditionError);
}

TEST(SymMatrix, SymmetrizedAveragesTranspose) {
  Matrix a(2, 2);
  a << 1, 2, 4, 1;
  const SymMatrix s = SymMatrix::symmetrized(a);
  EXPECT_DOUBLE_EQ(s(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(s(1, 0), 3.0);
}

TEST(SymEig, IdentityAndDiagonal) {
  const auto id = sym_eig(SymMatrix::identity(3));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(id.values(i), 1.0, 1e-15);

  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 2.0, 5.0, -1.0;
  const auto e = sym_eig(SymMatrix(d));
  EXPECT_NEAR(e.values(0), 5.0, 1e-14);
  EXPECT_NEAR(e.values(1), 2.0, 1e-14);
  EXPECT_NEAR(e.values(2), -1.0, 1e-14);
  EXPECT_NEAR(std::abs(e.vectors(1, 0)), 1.0, 1e-14);
}

TEST(SymEig, ReconstructsRandomMatrices) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 7;
    const Matrix a = random_symmetric(d, rng);
    const auto e = sym_eig(SymMatrix(a));
    const Matrix back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LT((back - a).norm(), 1e-12 * std::max(1.0, a.norm()));
    EXPECT_LT((e.vectors.transpose() * e.vectors - Matrix::Identity(d, d)).norm(), 1e-12);
    for (int i = 1; i < d; ++i) EXPECT_GE(e.values(i - 1), e.values(i));
  }
}

TEST(TopEig, MatchesLargestEigenvalueWithFixedSign) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + trial % 6;
    const Matrix a = random_symmetric(d, rng);
    const TopEigenpair t = top_eig(SymMatrix(a));
    EXPECT_NEAR(t.value, sym_eig(SymMatrix(a)).values(0), 1e-12);
    EXPECT_NEAR(t.vector.norm(), 1.0, 1e-12);
    EXPECT_LT((a * t.vector - t.value * t.vector).norm(), 1e-10 * std::max(1.0, a.norm()));
    Eigen::Index k = 0;
    t.vector.cwiseAbs().maxCoeff(&k);
    EXPECT_GT(t.vector(k), 0.0);
  }
}

TEST(InvSqrtPsd, DiagonalClosedForm) {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 4.0, 9.0;
  const SymMatrix r = inv_sqrt_psd(SymMatrix(a));
  EXPECT_NEAR(r(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(r(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r(0, 1), 0.0, 1e-15);
}

TEST(InvSqrtPsd, FloorAppliesToNullDirection) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 1.0;
  const SymMatrix r = inv_sqrt_psd(SymMatrix(a), 1e-8);
  EXPECT_NEAR(r(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(r(1, 1), 1e4, 1e-6);
}

TEST(InvSqrtPsd, SquaresToInverse) {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 5;
    const Matrix a = random_psd(d, d + 2, rng) + 0.1 * Matrix::Identity(d, d);
    const Matrix r = inv_sqrt_psd(SymMatrix::symmetrized(a)).matrix();
    EXPECT_LT((r * a * r - Matrix::Identity(d, d)).norm(), 1e-9);
  }
}

TEST(InvSqrtPsd, RejectsIndefinite) {
  Matrix a = Matrix::Zero(2, 2);
  a.diagonal() << 1.0, -1e-3;
  EXPECT_THROW(inv_sqrt_psd(SymMatrix(a)), NotPsdError);
}

TEST(RidgeSolve, SingleSample) {
  Matrix s(1, 2);
  s << 1.0, 0.0;
  Vector y(1);
  y << 1.0;
  const Vector t = ridge_solve(s, y, 0.5);
  EXPECT_NEAR(t(0), 1.0 / 1.5, 1e-15);
  EXPECT_NEAR(t(1), 0.0, 1e-15);
}

TEST(RidgeSolve, AgreesWithElimination) {
  Rng rng(14);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 6, n = 1 + trial % 13;
    const double lambda = std::pow(10.0, -1.0 - (trial % 4));
    const Matrix s = oracle::unit_ball_rows(n, d, rng);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = u(rng);
    const Vector t = ridge_solve(s, y, lambda);
    const auto ref = oracle::ridge_by_elimination(s, y, lambda);
    for (int j = 0; j < d; ++j) EXPECT_NEAR(t(j), ref[j], 1e-9 * std::max(1.0, std::abs(ref[j])));
  }
}

TEST(RidgeSolve, NormBoundProperty) {
  Rng rng(15);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + trial % 8, n = 1 + trial % 17;
    const double lambda = std::pow(10.0, -(trial % 5));
    const Matrix s = oracle::unit_ball_rows(n, d, rng);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = u(rng);
    EXPECT_LE(ridge_solve(s, y, lambda).norm(), 1.0 / lambda);
  }
}

TEST(RidgeSolve, ShrinksTowardProjection) {
  // With many samples on an orthonormal basis and tiny lambda, theta recovers the target.
  Matrix s = Matrix::Identity(3, 3);
  Vector y(3);
  y << 0.3, -0.2, 0.7;
  const Vector t = ridge_solve(s, y, 1e-9);
  EXPECT_LT((t - y).norm(), 1e-7);
}

TEST(RidgeSolve, RejectsBadInput) {
  Matrix s(2, 2);
  s << 1, 0, 0, 1;
  Vector y(2);
  y << 1, 1;
  EXPECT_THROW(ridge_solve(Matrix(0, 2), Vector(0), 0.1), InputError);
  EXPECT_THROW(ridge_solve(s, Vector(3), 0.1), InputError);
  EXPECT_THROW(ridge_solve(s, y, 0.0), InputError);
  s(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(ridge_solve(s, y, 0.1), InputError);
}

TEST(MeanOuterProduct, EmptyAndBasic) {
  EXPECT_EQ(mean_outer_product(Matrix(0, 3), 3), Matrix::Zero(3, 3));
  Matrix s(2, 2);
  s << 1, 0, 0, 1;
  const Matrix m = mean_outer_product(s, 2);
  EXPECT_DOUBLE_EQ(m(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(m(0, 1), 0.0);
}

TEST(InvSqrtPsd, ProductIsProjectorOntoAboveFloorSpace) {
  // Singular inputs: along a null direction the product is (rounding noise) / floor, so
  // the floor is taken at 1e-6 * lambda_max to keep that noise well below 1e-6.
  Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 3 + trial % 4, rank = 1 + trial % (d - 1);
    const SymMatrix a = SymMatrix::symmetrized(random_psd(d, rank, rng));
    const EigenDecomposition eig = sym_eig(a);
    const double floor = 1e-6 * eig.values(0);
    const Matrix r = inv_sqrt_psd(a, floor).matrix();
    const Matrix p = r * a.matrix() * r;
    for (Eigen::Index i = 0; i < d; ++i) {
      const Vector v = eig.vectors.col(i);
      const double along = v.dot(p * v);
      EXPECT_GE(along, -1e-6);
      EXPECT_LE(along, 1.0 + 1e-6);
      if (eig.values(i) >= 2.0 * floor) EXPECT_NEAR(along, 1.0, 1e-6);
    }
    for (double x : sym_eig(SymMatrix::symmetrized(p)).values) {
      EXPECT_GE(x, -1e-6);
      EXPECT_LE(x, 1.0 + 1e-6);
    }
  }
}

TEST(InvSqrtPsd, DefaultFloorGivesIdentityProductOnFullRank) {
  Rng rng(18);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 2 + trial % 5;
    const SymMatrix a = SymMatrix::symmetrized(random_psd(d, d + 3, rng));
    const Matrix r = inv_sqrt_psd(a).matrix();
    const auto vals = sym_eig(SymMatrix::symmetrized(r * a.matrix() * r)).values;
    for (double x : vals) EXPECT_NEAR(x, 1.0, 1e-6);
  }
}
