#include "zdp/pipeline.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "zdp/errors.hpp"

namespace zdp {

Plant build_plant(const ExperimentConfig& cfg) {
  cfg.validate();
  Plant plant;
  if (cfg.system_kind == "cartpole") {
    plant.nf = cartpole_normal_form(cfg.cartpole);
    plant.sys = cartpole_system(cfg.cartpole);
  } else {
    const int gamma = cfg.linear_gamma;
    const int nz = static_cast<int>(std::lround(std::sqrt(cfg.linear_a_z.size())));
    const MatrixXd a_eta =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            cfg.linear_a_eta.data(), nz, gamma);
    const MatrixXd a_z =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            cfg.linear_a_z.data(), nz, nz);
    plant.nf = linear_normal_form(a_eta, a_z);
    MatrixXd a = MatrixXd::Zero(gamma + nz, gamma + nz);
    a.topLeftCorner(gamma, gamma) = integrator_matrix(gamma);
    a.bottomLeftCorner(nz, gamma) = a_eta;
    a.bottomRightCorner(nz, nz) = a_z;
    VectorXd b = VectorXd::Zero(gamma + nz);
    b.head(gamma) = integrator_input(gamma);
    plant.sys.n = gamma + nz;
    plant.sys.drift = [a](const VectorXd& x) -> VectorXd { return a * x; };
    plant.sys.actuation = [b](const VectorXd&) -> VectorXd { return b; };
    plant.sys.name = "linear";
  }
  if (static_cast<int>(cfg.q_diag.size()) != plant.nf.n()) {
    throw ZdpError(ErrorKind::kValidation, "Q diagonal length does not match the state");
  }
  if (static_cast<int>(cfg.train.box_lo.size()) != plant.nf.nz) {
    throw ZdpError(ErrorKind::kValidation, "training box does not match the zero coordinates");
  }
  return plant;
}

ConstructReport construct(const ExperimentConfig& cfg) {
  const Plant plant = build_plant(cfg);
  ConstructReport r;
  r.linear = linearize_about_origin(plant.nf);
  const GainMatrix k = place_poles(r.linear, cfg.poles);
  r.a_cl = r.linear.a - r.linear.b * k.k;
  r.closed_loop = eig_decompose(r.a_cl);
  const InvariantSubspace sub =
      select_invariant_subspace(r.a_cl, plant.nf.gamma, plant.nf.nz, cfg.subspace);
  const LinearZdp zdp = build_linear_zdp(sub, r.linear, k);
  r.e = build_e_matrix(zdp, r.linear, r.a_cl, plant.nf.gamma);

  r.model.system = plant.nf.name;
  r.model.gamma = plant.nf.gamma;
  r.model.nz = plant.nf.nz;
  r.model.poles = cfg.poles;
  r.model.subspace = sub;
  r.model.zdp = zdp;

  r.subspace_residual = (r.a_cl * sub.s - sub.s * sub.j).norm() / r.a_cl.norm();
  r.output_on_subspace = (zdp.c * sub.s).norm();
  r.first_ladder = std::abs(zdp.c.dot(r.linear.b));
  r.ladder_error = plant.nf.gamma >= 2 ? std::abs(zdp.c * r.a_cl * r.linear.b - zdp.p) : 0.0;
  r.psi_is_zero = sub.s_eta.norm() < 1e-12;
  return r;
}

std::string construct_report_json(const ConstructReport& r) {
  nlohmann::json j;
  j["p"] = r.model.zdp.p;
  j["subspace_residual"] = r.subspace_residual;
  j["output_on_subspace"] = r.output_on_subspace;
  j["first_ladder"] = r.first_ladder;
  j["ladder_error"] = r.ladder_error;
  j["psi_lin_is_zero"] = r.psi_is_zero;
  j["chosen_eigenvalues"] = r.model.subspace.chosen_eigenvalues;
  std::vector<double> re;
  std::vector<double> im;
  for (Eigen::Index i = 0; i < r.closed_loop.values.size(); ++i) {
    re.push_back(r.closed_loop.values(i).real());
    im.push_back(r.closed_loop.values(i).imag());
  }
  j["closed_loop_eigenvalues_real"] = re;
  j["closed_loop_eigenvalues_imag"] = im;
  std::vector<double> ladder(r.e.ladder.data(), r.e.ladder.data() + r.e.ladder.size());
  j["ladder"] = ladder;
  return j.dump(2) + "\n";
}

TrainOutcome train_pipeline(const ExperimentConfig& cfg, const LinearZdpModel& model) {
  const Plant plant = build_plant(cfg);
  if (model.gamma != plant.nf.gamma || model.nz != plant.nf.nz) {
    throw ZdpError(ErrorKind::kValidation, "linear model does not match the configured system");
  }
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.jobs = cfg.jobs;
  const MlpParams init = MlpParams::random(plant.nf.nz, cfg.hidden, plant.nf.gamma,
                                           cfg.activation, cfg.seed, cfg.skip, true);
  TrainOutcome out;
  out.pretrain = pretrain(init, model.psi_matrix(), tc);
  const TrainResult trained = train(plant.nf, out.pretrain.params, cfg.cost(), tc, cfg.ilqr);
  out.history = trained.history;

  Checkpoint& c = out.checkpoint;
  c.system = plant.nf.name;
  c.params = trained.params;
  c.psi_lin = model.psi_matrix();
  c.s = model.subspace.s;
  c.meta.seed = cfg.seed;
  c.meta.steps = tc.steps;
  c.meta.batch_size = tc.batch_size;
  c.meta.learning_rate = tc.learning_rate;
  c.meta.optimizer = to_string(tc.optimizer);
  c.meta.pretrain_steps = out.pretrain.steps;
  c.meta.pretrain_mse = out.pretrain.mse;
  c.meta.initial_loss = trained.initial_loss;
  c.meta.final_loss = trained.final_loss;
  return out;
}

std::shared_ptr<const ZeroDynamicsPolicy> policy_from_model(const std::string& text) {
  if (model_kind(text) == "linear-zdp") {
    return std::make_shared<LinearPolicy>(linear_model_from_json(text).psi_matrix());
  }
  return std::make_shared<MlpPolicy>(checkpoint_from_json(text).params);
}

std::shared_ptr<const Controller> make_controller(
    const ExperimentConfig& cfg, const Plant& plant, const std::string& kind,
    std::shared_ptr<const ZeroDynamicsPolicy> policy) {
  if (kind == "lqr") return make_lqr_baseline(plant.nf, plant.sys, cfg.cost().q, cfg.r);
  if (kind == "zdp" || kind == "zdp-linear") {
    if (!policy) throw ZdpError(ErrorKind::kValidation, "controller '" + kind + "' needs a model");
    return std::make_shared<TrackingController>(plant.nf, std::move(policy), cfg.gains(), kind);
  }
  throw ZdpError(ErrorKind::kValidation, "unknown controller '" + kind + "'");
}

SimulationSummary simulate_pipeline(const ExperimentConfig& cfg, const Plant& plant,
                                    const Controller& controller,
                                    const ZeroDynamicsPolicy* policy) {
  if (static_cast<int>(cfg.initial_state.size()) != plant.nf.n()) {
    throw ZdpError(ErrorKind::kValidation, "initial_state has the wrong dimension");
  }
  const VectorXd x0 = Eigen::Map<const VectorXd>(cfg.initial_state.data(),
                                                 static_cast<Eigen::Index>(cfg.initial_state.size()));
  const VectorXd zeta0 = plant.nf.to_nz(x0).stacked();
  SimulationSummary s;
  s.traj = simulate(plant.nf, controller, zeta0, cfg.sim, policy);
  s.final_norm = s.traj.states.back().norm();
  const auto fit = [&](auto signal) -> std::optional<ExponentialFit> {
    try {
      return fit_exponential_envelope(s.traj, signal);
    } catch (const ZdpError&) {
      return std::nullopt;
    }
  };
  s.e_fit = fit([&](std::size_t i) { return s.traj.aux[i].e_norm; });
  s.z_fit = fit([&](std::size_t i) { return s.traj.aux[i].z_norm; });
  const auto show = [](const std::optional<ExponentialFit>& f) {
    return f ? fmt::format("{:.6g}", f->lambda) : std::string("n/a");
  };
  s.line = fmt::format("controller={} samples={} escaped={} final_norm={:.6g} e_lambda={} z_lambda={}",
                       controller.name(), s.traj.size(), s.traj.escaped ? 1 : 0, s.final_norm,
                       show(s.e_fit), show(s.z_fit));
  return s;
}

RoaOutcome roa_pipeline(const ExperimentConfig& cfg, const Plant& plant,
                        std::shared_ptr<const ZeroDynamicsPolicy> policy,
                        const std::string& zdp_name) {
  const std::vector<NamedController> controllers{
      {zdp_name, make_controller(cfg, plant, zdp_name, std::move(policy))},
      {"lqr", make_controller(cfg, plant, "lqr", nullptr)}};
  RoaOutcome out;
  out.result = roa_sweep(plant.nf, controllers, cfg.roa, cfg.settle, cfg.jobs);
  const RoaResult& r = out.result;
  const int zdp_count = r.success_count(0);
  const int lqr_count = r.success_count(1);
  std::ostringstream text;
  text << "cells " << r.cells() << "\n";
  text << zdp_name << " successes " << zdp_count << "\n";
  text << "lqr successes " << lqr_count << "\n";
  text << "difference " << zdp_count - lqr_count << "\n";
  for (std::size_t cell = 0; cell < r.cells(); ++cell) {
    if (r.success[0][cell] && !r.success[1][cell]) {
      ++out.zdp_only_cells;
      text << "zdp-only cell theta=" << fmt::format("{}", r.thetas[cell / r.theta_dots.size()])
           << " theta_dot=" << fmt::format("{}", r.theta_dots[cell % r.theta_dots.size()])
           << "\n";
    }
  }
  for (std::size_t cell = 0; cell < r.cells(); ++cell) {
    if (!r.success[0][cell] && r.success[1][cell]) {
      text << "lqr-only cell theta=" << fmt::format("{}", r.thetas[cell / r.theta_dots.size()])
           << " theta_dot=" << fmt::format("{}", r.theta_dots[cell % r.theta_dots.size()])
           << "\n";
    }
  }
  out.summary = text.str();
  return out;
}

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const VerifyCheck& c) { return c.passed; });
}

std::string VerifyReport::text() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " value=" << fmt::format("{:.6g}", c.value)
        << " threshold=" << fmt::format("{:.6g}", c.threshold) << "\n";
  }
  return out.str();
}

VerifyReport verify_pipeline(const ExperimentConfig& cfg, const Plant& plant,
                             const ZeroDynamicsPolicy& policy) {
  const NormalFormSystem& nf = plant.nf;
  if (policy.gamma() != nf.gamma || policy.nz() != nf.nz) {
    throw ZdpError(ErrorKind::kValidation, "model does not match the configured system");
  }
  VerifyReport report;
  const double r = cfg.verify_radius;
  const int count = cfg.verify_samples;

  // Input annihilation by the zero coordinates.
  {
    const auto xs = sample_box(VectorXd::Constant(nf.n(), -1.0), VectorXd::Constant(nf.n(), 1.0),
                               count, cfg.seed + 1);
    double worst = 0.0;
    for (const auto& x : xs) worst = std::max(worst, annihilation_residual(nf, plant.sys, x));
    report.checks.push_back({"input_annihilation", worst < 1e-6, worst, 1e-6});
  }

  const auto zs = sample_box(VectorXd::Constant(nf.nz, -r), VectorXd::Constant(nf.nz, r), count,
                             cfg.seed + 2);
  // Output relative degree on the manifold.
  {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& z : zs) {
      VectorXd zeta(nf.n());
      zeta << policy.eval(z), z;
      worst = std::min(worst, std::abs(output_jet(nf, policy, zeta).p));
    }
    report.checks.push_back(
        {"relative_degree", worst > cfg.verify_decoupling_tol, worst, cfg.verify_decoupling_tol});
  }

  // Manifold invariance under the optimal input.
  {
    double mean = std::numeric_limits<double>::infinity();
    try {
      const IlqrSolver solver(nf, cfg.cost(), cfg.ilqr);
      const LossReport loss = loss_batch(nf, policy, ilqr_policy(solver), zs, cfg.jobs);
      if (loss.skipped == 0) mean = loss.mean_residual;
    } catch (const ZdpError& e) {
      if (e.kind() == ErrorKind::kValidation) throw;
      spdlog::warn("invariance check could not run: {}", e.what());
    }
    report.checks.push_back(
        {"invariance_residual", mean < cfg.verify_residual_tol, mean, cfg.verify_residual_tol});
  }

  // Zero dynamics decay from small starts.
  {
    double worst_lambda = std::numeric_limits<double>::infinity();
    const SimConfig sim{cfg.sim.t_final, cfg.sim.dt, cfg.sim.escape_bound};
    for (int d = 0; d < 2 * nf.nz; ++d) {
      VectorXd z0 = VectorXd::Zero(nf.nz);
      z0(d / 2) = (d % 2 == 0 ? r : -r);
      double lambda = -std::numeric_limits<double>::infinity();
      try {
        const Trajectory t = simulate_zero_dynamics(nf, policy, z0, sim);
        const ExponentialFit fit =
            fit_exponential_envelope(t, [&](std::size_t i) { return t.aux[i].z_norm; });
        const bool decayed = !t.escaped && t.aux.back().z_norm < t.aux.front().z_norm;
        lambda = decayed ? fit.lambda : std::min(fit.lambda, 0.0);
      } catch (const ZdpError& e) {
        if (e.kind() == ErrorKind::kValidation) throw;
      }
      worst_lambda = std::min(worst_lambda, lambda);
    }
    report.checks.push_back({"zero_dynamics_decay", worst_lambda > 0.0, worst_lambda, 0.0});
  }
  return report;
}

}  // namespace zdp
