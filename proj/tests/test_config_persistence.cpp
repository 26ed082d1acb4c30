#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "zdp/config.hpp"
#include "zdp/errors.hpp"
#include "zdp/persistence.hpp"
#include "zdp/pipeline.hpp"

namespace zdp {
namespace {

void expect_validation_error(const std::string& text) {
  try {
    parse_config(text);
    FAIL() << "expected a validation error for:\n" << text;
  } catch (const ZdpError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation) << e.what();
  }
}

TEST(Config, DefaultsAreValidAndSerializeRoundTrip) {
  const ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  const std::string text = serialize_config(cfg);
  const ExperimentConfig back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.poles, cfg.poles);
  EXPECT_EQ(back.hidden, cfg.hidden);
  EXPECT_EQ(back.train.learning_rate, cfg.train.learning_rate);
  EXPECT_EQ((back.train.box_lo - cfg.train.box_lo).norm(), 0.0);
}

TEST(Config, ParsesOverridesAndKeepsDefaults) {
  const ExperimentConfig cfg = parse_config(
      "[construct]\npoles = -2, -3, -4, -5\n"
      "[network]\nhidden = 8, 8\nactivation = tanh\n"
      "[training]\nsteps = 10\noptimizer = sgd\n"
      "[run]\nseed = 99\njobs = 2\n");
  EXPECT_EQ(cfg.poles, (std::vector<double>{-2, -3, -4, -5}));
  EXPECT_EQ(cfg.hidden, (std::vector<int>{8, 8}));
  EXPECT_EQ(cfg.activation, Activation::kTanh);
  EXPECT_EQ(cfg.train.steps, 10);
  EXPECT_EQ(cfg.train.optimizer, Optimizer::kSgd);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.jobs, 2);
  EXPECT_EQ(cfg.kp, ExperimentConfig{}.kp);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  expect_validation_error("[network]\nwidth = 64\n");
  expect_validation_error("[nonsense]\nx = 1\n");
  expect_validation_error("[construct]\npoles = -1, -2, -3\n");
  expect_validation_error("[construct]\npoles = -1, -2, abc, -4\n");
  expect_validation_error("[cost]\nr = -1\n");
  expect_validation_error("[run]\njobs = 0\n");
  expect_validation_error("[system]\npole_length_m = 0\n");
}

TEST(Config, LinearSystemShapes) {
  const ExperimentConfig cfg = parse_config(
      "[system]\nkind = linear\nlinear_gamma = 2\nlinear_a_eta = 0, 0\nlinear_a_z = -3\n"
      "[construct]\npoles = -1, -2, -3\n[cost]\nq_diag = 1, 1, 1\n"
      "[training]\nz_box_lo = -1\nz_box_hi = 1\n[simulate]\ninitial_state = 0.1, 0, 0.1\n");
  const Plant plant = build_plant(cfg);
  EXPECT_EQ(plant.nf.gamma, 2);
  EXPECT_EQ(plant.nf.nz, 1);
  expect_validation_error(
      "[system]\nkind = linear\nlinear_gamma = 2\nlinear_a_eta = 0\nlinear_a_z = -3\n");
}

TEST(Persistence, LinearModelRoundTrip) {
  const ExperimentConfig cfg;
  const ConstructReport report = construct(cfg);
  const std::string text = linear_model_to_json(report.model);
  const LinearZdpModel back = linear_model_from_json(text);
  EXPECT_EQ(linear_model_to_json(back), text);
  EXPECT_EQ(model_kind(text), "linear-zdp");
  EXPECT_EQ((back.subspace.s - report.model.subspace.s).norm(), 0.0);
  EXPECT_EQ(back.zdp.p, report.model.zdp.p);
  EXPECT_EQ((back.zdp.k.k - report.model.zdp.k.k).norm(), 0.0);
}

TEST(Persistence, CheckpointRoundTripIsExact) {
  Checkpoint ckpt;
  ckpt.system = "cartpole";
  ckpt.params = MlpParams::random(2, {5, 3}, 2, Activation::kTanh, 4, true);
  ckpt.params.skip << 0.1, 0.2, 1.0 / 3.0, -2.0e-17;
  ckpt.psi_lin = MatrixXd::Random(2, 2);
  ckpt.s = MatrixXd::Random(4, 2);
  ckpt.meta.seed = 0xffffffffffffULL;
  ckpt.meta.optimizer = "adam";
  ckpt.meta.final_loss = 0.123456789012345678;
  const std::string text = checkpoint_to_json(ckpt);
  const Checkpoint back = checkpoint_from_json(text);
  EXPECT_EQ(checkpoint_to_json(back), text);
  EXPECT_EQ(model_kind(text), "mlp-zdp");
  EXPECT_EQ((back.params.flatten() - ckpt.params.flatten()).norm(), 0.0);
  EXPECT_EQ(back.meta.seed, ckpt.meta.seed);
  EXPECT_EQ(back.meta.final_loss, ckpt.meta.final_loss);
  EXPECT_EQ(back.params.activation, Activation::kTanh);
  const VectorXd z = VectorXd::Constant(2, 0.3);
  EXPECT_EQ((mlp_forward(back.params, z) - mlp_forward(ckpt.params, z)).norm(), 0.0);
}

TEST(Persistence, RejectsMalformedDocuments) {
  EXPECT_THROW(model_kind("{\"kind\": \"other\"}"), ZdpError);
  EXPECT_THROW(model_kind("not json"), ZdpError);
  EXPECT_THROW(checkpoint_from_json("{\"kind\": \"mlp-zdp\"}"), ZdpError);
  EXPECT_THROW(read_text("/nonexistent/zdp/file.json"), ZdpError);
}

TEST(Persistence, CsvLayouts) {
  Trajectory traj;
  traj.times = {0.0, 0.5};
  traj.states = {VectorXd::Constant(4, 1.0), VectorXd::Constant(4, 2.0)};
  traj.inputs = {0.25};
  traj.aux = {StepDiagnostics{0.1, 0.2, 0.3}, StepDiagnostics{}};
  const std::string csv = trajectory_csv(traj, 2);
  std::istringstream lines(csv);
  std::string header, row0, row1;
  std::getline(lines, header);
  std::getline(lines, row0);
  std::getline(lines, row1);
  EXPECT_EQ(header, "t,eta1,eta2,z1,z2,u,e_norm,z_norm,invariance_residual");
  EXPECT_EQ(row0.rfind("0,1,1,1,1,0.25,0.1,0.2,0.3", 0), 0u) << row0;
  EXPECT_FALSE(row1.empty());

  const std::string hist = loss_history_csv({{0, 1.5, 2.0}, {1, 1.25, 1.75}});
  EXPECT_EQ(hist.substr(0, hist.find('\n')), "step,mean_residual,max_residual");
}

TEST(Persistence, WriteCreatesDirectories) {
  const auto dir = std::filesystem::temp_directory_path() / "zdp_persist_test" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  write_text((dir / "a.txt").string(), "hello\n");
  EXPECT_EQ(read_text((dir / "a.txt").string()), "hello\n");
  std::filesystem::remove_all(dir.parent_path());
}

}  // namespace
}  // namespace zdp
