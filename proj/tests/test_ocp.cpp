#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "zdp/dynamics.hpp"
#include "zdp/errors.hpp"
#include "zdp/linalg.hpp"
#include "zdp/ocp.hpp"

namespace zdp {
namespace {

// Double integrator in the output chain plus a decoupled stable z = -z mode.
NormalFormSystem lti_system() {
  return linear_normal_form(MatrixXd::Zero(1, 2), MatrixXd::Constant(1, 1, -1.0), "lti");
}

QuadraticCost unit_cost(int n, double r) { return QuadraticCost{MatrixXd::Identity(n, n), r}; }

// Independent LQR oracle: integrate the Riccati ODE forward to steady state.
MatrixXd riccati_steady_state(const MatrixXd& a, const VectorXd& b, const MatrixXd& q, double r) {
  MatrixXd p = q;
  const double h = 1e-3;
  for (int i = 0; i < 200000; ++i) {
    const MatrixXd dp = a.transpose() * p + p * a - p * b * b.transpose() * p / r + q;
    p += h * dp;
    if (dp.norm() < 1e-13) break;
  }
  return p;
}

TEST(IlqrSolver, LtiMatchesLqrGainAndValue) {
  const NormalFormSystem nf = lti_system();
  const QuadraticCost cost = unit_cost(3, 1.0);
  IlqrConfig cfg;
  cfg.horizon_seconds = 3.0;
  const IlqrSolver solver(nf, cost, cfg);
  const LinearModel lin = linearize_about_origin(nf);
  const MatrixXd p = riccati_steady_state(lin.a, lin.b, cost.q, cost.r);
  const Eigen::RowVectorXd k = lin.b.transpose() * p / cost.r;
  EXPECT_LT((solver.terminal().p - p).norm(), 1e-7);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> d;
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd zeta0(3);
    for (int i = 0; i < 3; ++i) zeta0(i) = d(rng);
    zeta0 *= 0.1 / zeta0.norm();
    const IlqrSolution sol = solver.solve(zeta0);
    EXPECT_LT((sol.feedback_gains.front() - k).norm(), 1e-4);
    const double value = zeta0.dot(p * zeta0);
    EXPECT_LT(std::abs(sol.cost - value) / value, 1e-2);
    EXPECT_NEAR(sol.nominal_inputs.front(), -k.dot(zeta0), 1e-4);
  }
}

TEST(IlqrSolver, CostHistoryIsMonotone) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  IlqrConfig cfg;
  cfg.cost_tol = 1e-8;
  const IlqrSolver solver(nf, unit_cost(4, 0.01), cfg);
  VectorXd zeta0(4);
  zeta0 << 0.1, -0.2, 0.4, 0.05;
  const IlqrSolution sol = solver.solve(zeta0);
  ASSERT_GE(sol.cost_history.size(), 1u);
  for (std::size_t i = 1; i < sol.cost_history.size(); ++i) {
    EXPECT_LT(sol.cost_history[i], sol.cost_history[i - 1]);
  }
  EXPECT_EQ(sol.nominal_states.size(), static_cast<std::size_t>(cfg.steps() + 1));
  EXPECT_EQ(sol.nominal_inputs.size(), static_cast<std::size_t>(cfg.steps()));
  EXPECT_DOUBLE_EQ(sol.cost_to_go.front(), sol.cost);
}

// The reported sensitivity is the iLQR feedback gain, which leaves out the
// second-order terms of the dynamics. It matches the true derivative of u*
// as the state approaches the origin, where those terms vanish.
double gain_mismatch(const IlqrSolver& solver, const VectorXd& zeta0) {
  const OptimalControl oc = solver.query(zeta0);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    VectorXd plus = zeta0;
    VectorXd minus = zeta0;
    plus(i) += h;
    minus(i) -= h;
    const double fd = (solver.query(plus).u_star - solver.query(minus).u_star) / (2 * h);
    worst = std::max(worst, std::abs(oc.du_dzeta(i) - fd) / (1.0 + std::abs(fd)));
  }
  return worst;
}

TEST(IlqrSolver, QueryGainApproachesSensitivityNearOrigin) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  IlqrConfig cfg;
  cfg.cost_tol = 1e-12;
  cfg.max_iters = 200;
  const IlqrSolver solver(nf, unit_cost(4, 0.01), cfg);
  VectorXd direction(4);
  direction << 0.25, 0.0, 1.0, 0.0;
  const double far = gain_mismatch(solver, 0.2 * direction);
  const double near = gain_mismatch(solver, 0.01 * direction);
  EXPECT_LT(near, 5e-3);
  EXPECT_LT(near, 0.2 * far);
}

TEST(ValueDecrease, HoldsNearOrigin) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  VectorXd zeta0(4);
  zeta0 << 0.0, 0.0, 0.1, 0.0;
  const ValueDecreaseReport rep = value_decrease_check(
      nf, unit_cost(4, 0.01), NzState::split(zeta0, 2), IlqrConfig{}, 0.1);
  EXPECT_TRUE(rep.holds) << "worst ratio " << rep.worst_ratio;
  EXPECT_FALSE(rep.vdot.empty());
}

TEST(IlqrConfig, ValidationRejectsBadValues) {
  IlqrConfig cfg;
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(), ZdpError);
  cfg = IlqrConfig{};
  cfg.horizon_seconds = -1.0;
  EXPECT_THROW(cfg.validate(), ZdpError);
  QuadraticCost cost = unit_cost(2, 0.0);
  EXPECT_THROW(cost.validate(), ZdpError);
}

TEST(IlqrSolver, RejectsWrongInitialState) {
  const IlqrSolver solver(lti_system(), unit_cost(3, 1.0), IlqrConfig{});
  EXPECT_THROW(solver.solve(VectorXd::Zero(2)), ZdpError);
}

TEST(OptimalClosedLoop, ConvergesFromModerateStart) {
  const NormalFormSystem nf = cartpole_normal_form(CartpoleParams{});
  const IlqrSolver solver(nf, unit_cost(4, 0.01), IlqrConfig{});
  VectorXd zeta0(4);
  zeta0 << 0.2, 0.0, 0.3, -0.1;
  const Trajectory traj = optimal_closed_loop(solver, zeta0, 6.0, 0.5);
  ASSERT_FALSE(traj.states.empty());
  EXPECT_LT(traj.states.back().norm(), 1e-2 * zeta0.norm());
}

}  // namespace
}  // namespace zdp
