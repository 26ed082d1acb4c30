#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "zdp/errors.hpp"
#include "zdp/linalg.hpp"
#include "zdp/mlp.hpp"
#include "zdp/policy.hpp"

namespace zdp {
namespace {

MlpParams smooth_net(std::uint64_t seed, bool skip) {
  MlpParams p = MlpParams::random(2, {8, 8}, 2, Activation::kTanh, seed, skip);
  if (skip) p.skip = MatrixXd::Random(2, 2);
  return p;
}

double max_relative_error(const MatrixXd& a, const MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

// Hand-written forward pass for one hidden tanh layer.
TEST(MlpForward, MatchesHandComputation) {
  MlpParams p;
  p.activation = Activation::kTanh;
  p.weights = {MatrixXd(2, 1), MatrixXd(1, 2)};
  p.weights[0] << 0.5, -1.0;
  p.weights[1] << 2.0, 3.0;
  p.biases = {VectorXd(2), VectorXd(1)};
  p.biases[0] << 0.1, 0.2;
  p.biases[1] << -0.3;
  const VectorXd z = VectorXd::Constant(1, 0.7);
  const double expected = 2.0 * std::tanh(0.35 + 0.1) + 3.0 * std::tanh(-0.7 + 0.2) - 0.3;
  EXPECT_NEAR(mlp_forward(p, z)(0), expected, 1e-15);

  p.activation = Activation::kRelu;
  const double relu = 2.0 * 0.45 + 3.0 * 0.0 - 0.3;
  EXPECT_NEAR(mlp_forward(p, z)(0), relu, 1e-15);
  p.skip = MatrixXd::Constant(1, 1, 4.0);
  EXPECT_NEAR(mlp_forward(p, z)(0), relu + 2.8, 1e-15);
}

TEST(MlpInputJacobian, MatchesCentralDifferences) {
  for (bool skip : {false, true}) {
    const MlpParams p = smooth_net(3, skip);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d;
    for (int trial = 0; trial < 20; ++trial) {
      const VectorXd z = VectorXd::NullaryExpr(2, [&] { return d(rng); });
      const MatrixXd fd =
          jacobian_fd([&](const VectorXd& x) { return mlp_forward(p, x); }, z, 1e-6);
      EXPECT_LT(max_relative_error(mlp_input_jacobian(p, z), fd), 1e-4);
    }
  }
}

TEST(MlpJet, JacobianDotMatchesDirectionalDifference) {
  const MlpParams p = smooth_net(5, true);
  VectorXd z(2), v(2);
  z << 0.3, -0.4;
  v << 0.7, 0.2;
  const MlpJet jet = mlp_jet(p, z, v);
  const double h = 1e-6;
  const MatrixXd fd =
      (mlp_input_jacobian(p, z + h * v) - mlp_input_jacobian(p, z - h * v)) / (2 * h);
  EXPECT_LT(max_relative_error(jet.jacobian_dot, fd), 1e-6);
  EXPECT_LT((jet.value - mlp_forward(p, z)).norm(), 1e-15);
  EXPECT_LT((jet.jacobian - mlp_input_jacobian(p, z)).norm(), 1e-15);
}

TEST(MlpDualBackprop, MatchesFiniteDifferencesOfScalarObjective) {
  // Objective L = a . psi(z) + b . J(z) v; gradient against perturbing each
  // flattened parameter.
  const MlpParams p = smooth_net(7, true);
  VectorXd z(2), v(2), a(2), b(2);
  z << -0.2, 0.5;
  v << 1.1, -0.6;
  a << 0.3, -1.2;
  b << 0.8, 0.4;
  const auto objective = [&](const MlpParams& q) {
    return a.dot(mlp_forward(q, z)) + b.dot(mlp_input_jacobian(q, z) * v);
  };
  const MlpDualGradient g = mlp_dual_backprop(p, z, v, a, b);
  const VectorXd flat = p.flatten();
  ASSERT_EQ(g.params.size(), flat.size());
  const double h = 1e-6;
  VectorXd fd(flat.size());
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    VectorXd plus = flat, minus = flat;
    plus(i) += h;
    minus(i) -= h;
    fd(i) = (objective(p.with_values(plus)) - objective(p.with_values(minus))) / (2 * h);
  }
  EXPECT_LT(max_relative_error(g.params, fd), 1e-4);
  // Adjoint of v is J^T b.
  EXPECT_LT((g.v - mlp_input_jacobian(p, z).transpose() * b).norm(), 1e-12);
}

TEST(MlpParams, FlattenRoundTripAndCount) {
  const MlpParams p = smooth_net(9, true);
  EXPECT_EQ(p.parameter_count(), static_cast<std::size_t>(2 * 8 + 8 + 8 * 8 + 8 + 8 * 2 + 2 + 4));
  const MlpParams q = p.with_values(p.flatten());
  EXPECT_EQ((q.flatten() - p.flatten()).norm(), 0.0);
  EXPECT_THROW(p.with_values(VectorXd::Zero(3)), ZdpError);
}

TEST(MlpParams, RandomIsSeededAndZeroOutputWorks) {
  const MlpParams a = MlpParams::random(2, {16}, 2, Activation::kRelu, 42);
  const MlpParams b = MlpParams::random(2, {16}, 2, Activation::kRelu, 42);
  const MlpParams c = MlpParams::random(2, {16}, 2, Activation::kRelu, 43);
  EXPECT_EQ((a.flatten() - b.flatten()).norm(), 0.0);
  EXPECT_GT((a.flatten() - c.flatten()).norm(), 0.0);
  const MlpParams z = MlpParams::random(2, {16}, 2, Activation::kRelu, 1, true, true);
  EXPECT_EQ(mlp_forward(z, VectorXd::Ones(2)).norm(), 0.0);
  EXPECT_TRUE(z.has_skip());
}

TEST(MlpParams, ValidateRejectsBrokenShapes) {
  MlpParams p = smooth_net(1, false);
  p.weights[1] = MatrixXd::Zero(8, 3);
  EXPECT_THROW(p.validate(), ZdpError);
  p = smooth_net(1, false);
  p.biases[0](0) = std::nan("");
  EXPECT_THROW(p.validate(), ZdpError);
}

TEST(Activation, StringRoundTrip) {
  EXPECT_EQ(activation_from_string(to_string(Activation::kRelu)), Activation::kRelu);
  EXPECT_EQ(activation_from_string(to_string(Activation::kTanh)), Activation::kTanh);
  EXPECT_THROW(activation_from_string("sigmoid"), ZdpError);
}

TEST(Policies, LinearAndZeroPolicy) {
  MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  const LinearPolicy lp(m);
  VectorXd z(2);
  z << 1, -1;
  EXPECT_EQ((lp.eval(z) - m * z).norm(), 0.0);
  EXPECT_EQ((lp.jacobian(z) - m).norm(), 0.0);
  const auto zero = zero_policy(2, 2);
  EXPECT_EQ(zero->eval(z).norm(), 0.0);
  const MlpPolicy mp(smooth_net(2, true));
  EXPECT_LT((mp.jacobian(z) - mlp_input_jacobian(mp.params(), z)).norm(), 1e-15);
}

}  // namespace
}  // namespace zdp
