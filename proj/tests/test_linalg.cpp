#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "zdp/errors.hpp"
#include "zdp/linalg.hpp"

namespace zdp {
namespace {

LinearModel double_integrator() {
  MatrixXd a(2, 2);
  a << 0, 1, 0, 0;
  VectorXd b(2);
  b << 0, 1;
  return LinearModel::plain(a, b);
}

// Coefficients of det(sI - A) by Faddeev-LeVerrier, highest power first.
std::vector<double> char_poly(const MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<double> c(n + 1, 0.0);
  c[0] = 1.0;
  MatrixXd m = MatrixXd::Zero(n, n);
  for (int k = 1; k <= n; ++k) {
    m = a * m + c[k - 1] * MatrixXd::Identity(n, n);
    c[k] = -(a * m).trace() / k;
  }
  return c;
}

std::vector<double> poly_from_roots(const std::vector<double>& roots) {
  std::vector<double> c{1.0};
  for (double r : roots) {
    std::vector<double> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i] += c[i];
      next[i + 1] -= r * c[i];
    }
    c = next;
  }
  return c;
}

TEST(JacobianFd, MatchesAnalyticJacobian) {
  const VectorMap f = [](const VectorXd& x) {
    VectorXd y(2);
    y << std::sin(x(0)) * x(1), x(0) * x(0) + std::exp(x(1));
    return y;
  };
  VectorXd x(2);
  x << 0.4, -0.3;
  MatrixXd expected(2, 2);
  expected << std::cos(0.4) * -0.3, std::sin(0.4), 0.8, std::exp(-0.3);
  EXPECT_LT((jacobian_fd(f, x) - expected).norm(), 1e-9);
}

TEST(JacobianFd, NonFiniteIsReported) {
  const VectorMap f = [](const VectorXd& x) {
    return VectorXd::Constant(1, std::log(x(0)));
  };
  try {
    jacobian_fd(f, VectorXd::Zero(1));
    FAIL() << "expected NonFinite";
  } catch (const ZdpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
  }
}

TEST(LqrGain, DoubleIntegratorClosedForm) {
  // Q = I, r = 1: P = [[sqrt3, 1], [1, sqrt3]], K = [1, sqrt3].
  const LqrSolution sol = lqr_gain(double_integrator(), MatrixXd::Identity(2, 2), 1.0);
  EXPECT_NEAR(sol.gain.k(0), 1.0, 1e-8);
  EXPECT_NEAR(sol.gain.k(1), std::sqrt(3.0), 1e-8);
  MatrixXd p(2, 2);
  p << std::sqrt(3.0), 1.0, 1.0, std::sqrt(3.0);
  EXPECT_LT((sol.p - p).norm(), 1e-8);
}

TEST(LqrGain, RiccatiResidualAndStability) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd a(4, 4);
    VectorXd b(4);
    for (int i = 0; i < 16; ++i) a(i) = d(rng);
    for (int i = 0; i < 4; ++i) b(i) = d(rng);
    const LinearModel model = LinearModel::plain(a, b);
    const MatrixXd q = MatrixXd::Identity(4, 4);
    const LqrSolution sol = lqr_gain(model, q, 0.1);
    EXPECT_LT(riccati_residual(model, q, 0.1, sol.p), 1e-7 * (1.0 + sol.p.norm()));
    EXPECT_TRUE(is_hurwitz(a - b * sol.gain.k));
    EXPECT_LT((sol.p - sol.p.transpose()).norm(), 1e-9 * sol.p.norm());
  }
}

TEST(LqrGain, UnstabilizableIsRejected) {
  MatrixXd a(2, 2);
  a << 1, 0, 0, -1;
  VectorXd b(2);
  b << 0, 1;
  EXPECT_THROW(lqr_gain(LinearModel::plain(a, b), MatrixXd::Identity(2, 2), 1.0), ZdpError);
}

TEST(SolveLyapunov, SatisfiesEquation) {
  MatrixXd a(3, 3);
  a << -1, 2, 0, 0, -3, 1, 1, 0, -2;
  const MatrixXd q = MatrixXd::Identity(3, 3);
  const MatrixXd x = solve_lyapunov(a, q);
  EXPECT_LT((a.transpose() * x + x * a + q).norm(), 1e-10);
  // Scalar oracle: a x + x a + q = 0.
  EXPECT_NEAR(solve_lyapunov(MatrixXd::Constant(1, 1, -2.0), MatrixXd::Ones(1, 1))(0), 0.25,
              1e-14);
}

TEST(PlacePoles, CharacteristicPolynomialMatchesRequest) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  const std::vector<double> poles{-1.0, -2.0, -3.0, -4.0};
  const std::vector<double> expected = poly_from_roots(poles);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixXd a(4, 4);
    VectorXd b(4);
    for (int i = 0; i < 16; ++i) a(i) = d(rng);
    for (int i = 0; i < 4; ++i) b(i) = d(rng);
    const GainMatrix k = place_poles(LinearModel::plain(a, b), poles);
    const std::vector<double> c = char_poly(a - b * k.k);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_NEAR(c[i], expected[i], 1e-6 * std::abs(expected[i]) + 1e-8);
    }
  }
}

TEST(PlacePoles, DoubleIntegratorHandValue) {
  // (s + 1)(s + 2) = s^2 + 3 s + 2 -> K = [2, 3].
  const GainMatrix k = place_poles(double_integrator(), {-1.0, -2.0});
  EXPECT_NEAR(k.k(0), 2.0, 1e-12);
  EXPECT_NEAR(k.k(1), 3.0, 1e-12);
}

TEST(PlacePoles, RejectsBadRequests) {
  try {
    place_poles(double_integrator(), {-1.0});
    FAIL();
  } catch (const ZdpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBadPoles);
  }
  try {
    place_poles(double_integrator(), {-1.0, -1.0});
    FAIL();
  } catch (const ZdpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kBadPoles);
  }
  MatrixXd a = MatrixXd::Identity(2, 2);
  VectorXd b(2);
  b << 1, 1;
  try {
    place_poles(LinearModel::plain(a, b), {-1.0, -2.0});
    FAIL();
  } catch (const ZdpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUncontrollable);
  }
}

TEST(EigDecompose, SortedAndConsistent) {
  MatrixXd a(3, 3);
  a << 0, 1, 0, -2, -3, 0, 0, 0, -0.5;
  const EigenPairs e = eig_decompose(a);
  EXPECT_NEAR(e.values(0).real(), -2.0, 1e-12);
  EXPECT_NEAR(e.values(1).real(), -1.0, 1e-12);
  EXPECT_NEAR(e.values(2).real(), -0.5, 1e-12);
  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXcd v = e.vectors.col(i);
    EXPECT_LT((a.cast<std::complex<double>>() * v - e.values(i) * v).norm(), 1e-10);
  }
}

TEST(MatrixRank, DetectsDeficiency) {
  MatrixXd m(3, 3);
  m << 1, 2, 3, 2, 4, 6, 0, 1, 1;
  EXPECT_EQ(matrix_rank(m), 2);
  EXPECT_EQ(matrix_rank(MatrixXd::Identity(4, 4)), 4);
  EXPECT_EQ(controllability_matrix(double_integrator()).rows(), 2);
  EXPECT_EQ(matrix_rank(controllability_matrix(double_integrator())), 2);
}

TEST(IsHurwitz, Basic) {
  EXPECT_TRUE(is_hurwitz(-MatrixXd::Identity(2, 2)));
  EXPECT_FALSE(is_hurwitz(double_integrator().a));
}

TEST(Linearize, CartpoleNormalFormMatchesHandDerivation) {
  const CartpoleParams p;
  const LinearModel lin = linearize_about_origin(cartpole_normal_form(p));
  // eta' = F eta + G u; p_theta' = m g l theta; theta' = (p_theta - m l xdot)/(m l^2).
  const double ml = p.pole_mass * p.pole_length;
  MatrixXd a = MatrixXd::Zero(4, 4);
  a(0, 1) = 1.0;
  a(2, 1) = -ml / (ml * p.pole_length);
  a(2, 3) = 1.0 / (ml * p.pole_length);
  a(3, 2) = ml * p.gravity;
  EXPECT_LT((lin.a - a).norm(), 1e-7);
  EXPECT_EQ(lin.gamma, 2);
  EXPECT_NEAR(lin.b(1), 1.0, 1e-12);
  EXPECT_EQ(lin.a_z.rows(), 2);
}

}  // namespace
}  // namespace zdp
