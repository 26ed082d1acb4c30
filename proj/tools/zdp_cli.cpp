// Command-line driver for the zero-dynamics-policy pipeline.
//
//   zdp_cli construct --config cfg.ini --out DIR
//   zdp_cli train     --config cfg.ini --model DIR/linear_zdp.json --out DIR
//   zdp_cli simulate  --config cfg.ini --model MODEL --controller zdp --out DIR
//   zdp_cli roa       --config cfg.ini --model MODEL --out DIR
//   zdp_cli verify    --config cfg.ini --model MODEL --out DIR
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 failed
// verification.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "zdp/errors.hpp"
#include "zdp/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerification = 4;

struct Options {
  std::string config;
  std::string model;
  std::string out;
  std::string controller = "zdp";
  long long seed = -1;
  int jobs = 0;
};

zdp::ExperimentConfig resolve(const Options& opt) {
  zdp::ExperimentConfig cfg =
      opt.config.empty() ? zdp::ExperimentConfig{} : zdp::load_config(opt.config);
  if (opt.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opt.seed);
  if (opt.jobs > 0) cfg.jobs = opt.jobs;
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  cfg.validate();
  return cfg;
}

std::string path_in(const zdp::ExperimentConfig& cfg, const std::string& name) {
  return cfg.output_dir + "/" + name;
}

std::string require_model(const Options& opt) {
  if (opt.model.empty()) {
    throw zdp::ZdpError(zdp::ErrorKind::kValidation, "--model is required");
  }
  return zdp::read_text(opt.model);
}

int run_construct(const Options& opt) {
  const auto cfg = resolve(opt);
  const zdp::ConstructReport report = zdp::construct(cfg);
  zdp::write_text(path_in(cfg, "linear_zdp.json"), zdp::linear_model_to_json(report.model));
  zdp::write_text(path_in(cfg, "construct_report.json"), zdp::construct_report_json(report));
  std::cout << "p=" << report.model.zdp.p << " subspace_residual=" << report.subspace_residual
            << " psi_lin_zero=" << (report.psi_is_zero ? 1 : 0) << "\n";
  return kExitOk;
}

int run_train(const Options& opt) {
  const auto cfg = resolve(opt);
  const zdp::LinearZdpModel model = zdp::linear_model_from_json(require_model(opt));
  const zdp::TrainOutcome outcome = zdp::train_pipeline(cfg, model);
  zdp::write_text(path_in(cfg, "checkpoint.json"), zdp::checkpoint_to_json(outcome.checkpoint));
  zdp::write_text(path_in(cfg, "loss_history.csv"), zdp::loss_history_csv(outcome.history));
  std::cout << "pretrain_mse=" << outcome.pretrain.mse
            << " initial_loss=" << outcome.checkpoint.meta.initial_loss
            << " final_loss=" << outcome.checkpoint.meta.final_loss << "\n";
  return kExitOk;
}

int run_simulate(const Options& opt) {
  const auto cfg = resolve(opt);
  const zdp::Plant plant = zdp::build_plant(cfg);
  std::shared_ptr<const zdp::ZeroDynamicsPolicy> policy;
  if (opt.controller != "lqr" || !opt.model.empty()) {
    policy = zdp::policy_from_model(require_model(opt));
  }
  const auto controller = zdp::make_controller(cfg, plant, opt.controller, policy);
  const zdp::SimulationSummary s =
      zdp::simulate_pipeline(cfg, plant, *controller, policy.get());
  zdp::write_text(path_in(cfg, "trajectory.csv"), zdp::trajectory_csv(s.traj, plant.nf.gamma));
  zdp::write_text(path_in(cfg, "simulate_summary.txt"), s.line + "\n");
  std::cout << s.line << "\n";
  return kExitOk;
}

int run_roa(const Options& opt) {
  const auto cfg = resolve(opt);
  const zdp::Plant plant = zdp::build_plant(cfg);
  const std::string text = require_model(opt);
  const std::string name = zdp::model_kind(text) == "linear-zdp" ? "zdp-linear" : "zdp";
  const zdp::RoaOutcome outcome =
      zdp::roa_pipeline(cfg, plant, zdp::policy_from_model(text), name);
  zdp::write_text(path_in(cfg, "roa.csv"), zdp::roa_csv(outcome.result));
  zdp::write_text(path_in(cfg, "roa_summary.txt"), outcome.summary);
  std::cout << outcome.summary;
  return kExitOk;
}

int run_verify(const Options& opt) {
  const auto cfg = resolve(opt);
  const zdp::Plant plant = zdp::build_plant(cfg);
  const auto policy = zdp::policy_from_model(require_model(opt));
  const zdp::VerifyReport report = zdp::verify_pipeline(cfg, plant, *policy);
  zdp::write_text(path_in(cfg, "verify_report.txt"), report.text());
  std::cout << report.text();
  return report.all_passed() ? kExitOk : kExitVerification;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("zdp");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("ZDP_LOG_LEVEL")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Zero dynamics policy pipeline"};
  app.require_subcommand(1);
  Options opt;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config, "Experiment configuration file");
    cmd->add_option("--out", opt.out, "Output directory (overrides the config)");
    cmd->add_option("--seed", opt.seed, "Random seed (overrides the config)");
    cmd->add_option("--jobs", opt.jobs, "Worker threads (overrides the config)");
  };
  auto* construct = app.add_subcommand("construct", "Build the linear ZDP");
  add_common(construct);
  auto* train = app.add_subcommand("train", "Pretrain and train the network ZDP");
  add_common(train);
  train->add_option("--model", opt.model, "Linear ZDP model file")->required();
  auto* simulate = app.add_subcommand("simulate", "Simulate one closed-loop trajectory");
  add_common(simulate);
  simulate->add_option("--model", opt.model, "Linear model or checkpoint");
  simulate->add_option("--controller", opt.controller, "zdp, zdp-linear or lqr")
      ->check(CLI::IsMember({"zdp", "zdp-linear", "lqr"}));
  auto* roa = app.add_subcommand("roa", "Region-of-attraction sweep against LQR");
  add_common(roa);
  roa->add_option("--model", opt.model, "Linear model or checkpoint")->required();
  auto* verify = app.add_subcommand("verify", "Check the hypotheses near the origin");
  add_common(verify);
  verify->add_option("--model", opt.model, "Linear model or checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*construct) return run_construct(opt);
    if (*train) return run_train(opt);
    if (*simulate) return run_simulate(opt);
    if (*roa) return run_roa(opt);
    if (*verify) return run_verify(opt);
  } catch (const zdp::ZdpError& e) {
    spdlog::error("{}: {}", zdp::to_string(e.kind()), e.what());
    std::cerr << "error: " << zdp::to_string(e.kind()) << ": " << e.what() << "\n";
    const bool invalid =
        e.kind() == zdp::ErrorKind::kValidation || e.kind() == zdp::ErrorKind::kBadPoles;
    return invalid ? kExitValidation : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitValidation;
}
