#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zdp/config.hpp"
#include "zdp/dynamics.hpp"
#include "zdp/learning.hpp"
#include "zdp/linalg.hpp"
#include "zdp/linear_zdp.hpp"
#include "zdp/persistence.hpp"
#include "zdp/policy.hpp"
#include "zdp/runtime.hpp"

namespace zdp {

/// The configured system in both coordinate sets.
struct Plant {
  NormalFormSystem nf;
  ControlAffineSystem sys;
};

Plant build_plant(const ExperimentConfig& cfg);

struct ConstructReport {
  LinearZdpModel model;
  LinearModel linear;
  MatrixXd a_cl;
  EigenPairs closed_loop;
  EMatrixReport e;
  double subspace_residual = 0.0;  // |A_cl S - S J| / |A_cl|
  double output_on_subspace = 0.0; // |C S|
  double first_ladder = 0.0;       // |C B|
  double ladder_error = 0.0;       // |C A_cl B - p|
  bool psi_is_zero = false;
};

/// linearize -> place poles -> invariant subspace -> output map -> E matrix.
ConstructReport construct(const ExperimentConfig& cfg);
std::string construct_report_json(const ConstructReport& report);

struct TrainOutcome {
  Checkpoint checkpoint;
  PretrainResult pretrain;
  std::vector<HistoryEntry> history;
};

/// Pretrains a fresh network on psi_lin, then minimizes the invariance loss.
TrainOutcome train_pipeline(const ExperimentConfig& cfg, const LinearZdpModel& model);

/// Loads a linear model or a checkpoint as a policy.
std::shared_ptr<const ZeroDynamicsPolicy> policy_from_model(const std::string& text);

/// "zdp" / "zdp-linear" track the given policy; "lqr" is the baseline.
std::shared_ptr<const Controller> make_controller(
    const ExperimentConfig& cfg, const Plant& plant, const std::string& kind,
    std::shared_ptr<const ZeroDynamicsPolicy> policy);

struct SimulationSummary {
  Trajectory traj;
  std::optional<ExponentialFit> e_fit;
  std::optional<ExponentialFit> z_fit;
  double final_norm = 0.0;
  std::string line;
};

SimulationSummary simulate_pipeline(const ExperimentConfig& cfg, const Plant& plant,
                                    const Controller& controller,
                                    const ZeroDynamicsPolicy* policy);

struct RoaOutcome {
  RoaResult result;
  std::string summary;
  int zdp_only_cells = 0;
};

/// Sweeps the tracking controller for `policy` (named `zdp_name`) against the
/// LQR baseline.
RoaOutcome roa_pipeline(const ExperimentConfig& cfg, const Plant& plant,
                        std::shared_ptr<const ZeroDynamicsPolicy> policy,
                        const std::string& zdp_name);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_passed() const;
  std::string text() const;
};

/// Annihilation, relative degree, invariance residual and zero-dynamics
/// stability near the origin.
VerifyReport verify_pipeline(const ExperimentConfig& cfg, const Plant& plant,
                             const ZeroDynamicsPolicy& policy);

}  // namespace zdp
