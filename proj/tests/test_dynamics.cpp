#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "zdp/dynamics.hpp"
#include "zdp/errors.hpp"
#include "zdp/linalg.hpp"

namespace zdp {
namespace {

// Independent oracle: solve the Euler-Lagrange equations M(q) qdd = tau - h
// numerically for generalized coordinates q = (x, theta).
Eigen::Vector2d lagrange_accel(const CartpoleParams& p, const VectorXd& x, double force) {
  const double c = std::cos(x(1));
  const double s = std::sin(x(1));
  Eigen::Matrix2d mass;
  mass << p.cart_mass + p.pole_mass, p.pole_mass * p.pole_length * c,
      p.pole_mass * p.pole_length * c, p.pole_mass * p.pole_length * p.pole_length;
  // Velocity and gravity terms from dL/dq - d/dt(dL/dqdot) without qdd.
  Eigen::Vector2d bias;
  bias << -p.pole_mass * p.pole_length * x(3) * x(3) * s,
      -p.pole_mass * p.gravity * p.pole_length * s;
  Eigen::Vector2d tau;
  tau << force - cart_damping(x(2), p.damping_threshold), 0.0;
  return mass.lu().solve(tau - bias);
}

VectorXd random_state(std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> d(-bound, bound);
  VectorXd x(4);
  for (int i = 0; i < 4; ++i) x(i) = d(rng);
  return x;
}

TEST(CartpoleSystem, MatchesEulerLagrangeOracle) {
  const CartpoleParams p;
  const ControlAffineSystem sys = cartpole_system(p);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const VectorXd x = random_state(rng, 2.0);
    const double v = std::uniform_real_distribution<double>(-5, 5)(rng);
    const VectorXd xdot = sys.rhs(x, v);
    const Eigen::Vector2d qdd = lagrange_accel(p, x, v);
    EXPECT_NEAR(xdot(0), x(2), 1e-14);
    EXPECT_NEAR(xdot(1), x(3), 1e-14);
    EXPECT_NEAR(xdot(2), qdd(0), 1e-11);
    EXPECT_NEAR(xdot(3), qdd(1), 1e-11);
  }
}

TEST(CartpoleSystem, DampingDeadZone) {
  EXPECT_EQ(cart_damping(5e-4, 1e-3), 0.0);
  EXPECT_EQ(cart_damping(-5e-4, 1e-3), 0.0);
  EXPECT_EQ(cart_damping(0.2, 1e-3), 0.2);
  EXPECT_EQ(cart_damping(-0.2, 1e-3), -0.2);
}

TEST(CartpoleSystem, RejectsNonPhysicalParameters) {
  CartpoleParams p;
  p.pole_length = 0.0;
  EXPECT_THROW(cartpole_system(p), ZdpError);
  p = CartpoleParams{};
  p.cart_mass = -1.0;
  try {
    cartpole_normal_form(p);
    FAIL() << "expected a validation error";
  } catch (const ZdpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
  }
}

TEST(CartpoleNormalForm, RoundTrip) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const VectorXd x = random_state(rng, 2.0);
    const VectorXd back = nf.from_nz(nf.to_nz(x));
    EXPECT_LT((back - x).norm(), 1e-12);
  }
}

TEST(CartpoleNormalForm, HandComputedCoordinates) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  VectorXd x(4);
  x << 0.3, 0.0, 2.0, 1.0;
  const NzState s = nf.to_nz(x);
  EXPECT_DOUBLE_EQ(s.eta(0), 0.3);
  EXPECT_DOUBLE_EQ(s.eta(1), 2.0);
  EXPECT_DOUBLE_EQ(s.z(0), 0.0);
  // p_theta = m l^2 thetadot + m l xdot cos(theta) = 0.1 + 0.2.
  EXPECT_NEAR(s.z(1), 0.3, 1e-15);
}

TEST(CartpoleNormalForm, ZeroCoordinatesAnnihilateInput) {
  const CartpoleParams p;
  const NormalFormSystem nf = cartpole_normal_form(p);
  const ControlAffineSystem sys = cartpole_system(p);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    EXPECT_LT(annihilation_residual(nf, sys, random_state(rng, 2.0)), 1e-8);
  }
}

TEST(CartpoleNormalForm, ChainRuleAgreesWithPhysicalDynamics) {
  // d/dt Phi(x) along the physical vector field must equal the normal-form
  // right-hand side at Phi(x).
  const CartpoleParams p;
  const NormalFormSystem nf = cartpole_normal_form(p);
  const ControlAffineSystem sys = cartpole_system(p);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd x = random_state(rng, 1.5);
    const double v = std::uniform_real_distribution<double>(-3, 3)(rng);
    const MatrixXd dphi =
        jacobian_fd([&](const VectorXd& xs) { return nf.to_nz(xs).stacked(); }, x, 1e-6);
    const VectorXd expected = dphi * sys.rhs(x, v);
    const VectorXd actual = nf.physical_rhs(nf.to_nz(x).stacked(), v);
    EXPECT_LT((expected - actual).norm(), 1e-7 * (1.0 + expected.norm()));
  }
}

TEST(CartpoleNormalForm, UprightEquilibrium) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  const VectorXd zero = VectorXd::Zero(4);
  EXPECT_EQ(nf.physical_rhs(zero, 0.0).norm(), 0.0);
  EXPECT_EQ(nf.omega_at(zero).norm(), 0.0);
}

TEST(FeedbackLinearize, RealizesAuxiliaryInput) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const VectorXd zeta = random_state(rng, 1.0);
    const double u = std::uniform_real_distribution<double>(-4, 4)(rng);
    const double v = feedback_linearize(nf, NzState::split(zeta, 2), u);
    const VectorXd physical = nf.physical_rhs(zeta, v);
    const VectorXd linear = nf.linearized_rhs(zeta, u);
    EXPECT_LT((physical - linear).norm(), 1e-12);
  }
}

TEST(FeedbackLinearize, SingularDecouplingIsReported) {
  NormalFormSystem nf = linear_normal_form(MatrixXd::Zero(1, 2), MatrixXd::Constant(1, 1, -1.0));
  nf.ghat = [](const NzState&) -> VectorXd { return VectorXd::Zero(2); };
  try {
    feedback_linearize(nf, NzState{VectorXd::Zero(2), VectorXd::Zero(1)}, 1.0);
    FAIL() << "expected SingularDecoupling";
  } catch (const ZdpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSingularDecoupling);
  }
}

TEST(LinearNormalForm, BlocksAndIdentityCoordinates) {
  MatrixXd a_eta(1, 2);
  a_eta << 2.0, -1.0;
  const MatrixXd a_z = MatrixXd::Constant(1, 1, 0.5);
  const NormalFormSystem nf = linear_normal_form(a_eta, a_z);
  VectorXd zeta(3);
  zeta << 1.0, 2.0, 3.0;
  const VectorXd rhs = nf.linearized_rhs(zeta, 4.0);
  EXPECT_DOUBLE_EQ(rhs(0), 2.0);
  EXPECT_DOUBLE_EQ(rhs(1), 4.0);
  EXPECT_DOUBLE_EQ(rhs(2), 2.0 * 1.0 - 1.0 * 2.0 + 0.5 * 3.0);
  EXPECT_EQ((nf.from_nz(nf.to_nz(zeta)) - zeta).norm(), 0.0);
  EXPECT_THROW(linear_normal_form(MatrixXd::Zero(2, 2), MatrixXd::Zero(1, 1)), ZdpError);
}

TEST(AssumptionOne, HoldsForCartpoleAndDetectsHigherCoupling) {
  const NormalFormSystem cart = cartpole_normal_form(CartpoleParams{});
  EXPECT_EQ(assumption_one_violation(cart, NzState{VectorXd::Ones(2), VectorXd::Ones(2)}), 0.0);
  MatrixXd a_eta(1, 3);
  a_eta << 0.0, 0.0, 1.0;
  const NormalFormSystem bad = linear_normal_form(a_eta, MatrixXd::Constant(1, 1, -1.0));
  EXPECT_NEAR(assumption_one_violation(bad, NzState{VectorXd::Zero(3), VectorXd::Zero(1)}), 1.0,
              1e-8);
}

TEST(CartpoleEnergy, HandValue) {
  const CartpoleParams p;
  VectorXd x(4);
  x << 0.0, 0.0, 1.0, 0.0;
  // Kinetic 0.5 * 1.1 * 1 plus potential m g l.
  EXPECT_NEAR(cartpole_energy(p, x), 0.55 + 0.98, 1e-12);
}

}  // namespace
}  // namespace zdp
