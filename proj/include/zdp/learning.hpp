#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "zdp/dynamics.hpp"
#include "zdp/linear_zdp.hpp"
#include "zdp/mlp.hpp"
#include "zdp/ocp.hpp"
#include "zdp/policy.hpp"

namespace zdp {

enum class Optimizer { kSgd, kMomentum, kAdam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 1e-2;
  int steps = 2000;
  VectorXd box_lo;  // z-box sampled uniformly
  VectorXd box_hi;
  std::uint64_t seed = 0;
  int pretrain_steps = 4000;
  double pretrain_learning_rate = 3e-3;
  int pretrain_batch = 64;
  double pretrain_tol = 1e-4;
  Optimizer optimizer = Optimizer::kAdam;
  double momentum = 0.9;
  /// Cosine decay of the step size down to learning_rate * final_lr_fraction.
  double final_lr_fraction = 0.1;
  int jobs = 1;
  /// Re-centre the output bias after every update so psi(0) stays 0.
  bool anchor_origin = true;

  void validate() const;
};

struct LossReport {
  double mean_residual = 0.0;
  double max_residual = 0.0;
  double mean_squared = 0.0;  // the SGD objective
  std::vector<double> residuals;
  int skipped = 0;
};

/// u*(zeta) and its sensitivity. The iLQR solver is the production source;
/// tests substitute closed-form policies.
using OptimalPolicy = std::function<OptimalControl(const VectorXd& zeta)>;

OptimalPolicy ilqr_policy(const IlqrSolver& solver);

/// fhat + ghat v - (dpsi/dz) omega at (psi(z), z), with v the physical input
/// that realizes the auxiliary optimal input u_star.
VectorXd invariance_residual(const NormalFormSystem& nf,
                             const ZeroDynamicsPolicy& psi, double u_star,
                             const VectorXd& z);

LossReport loss_batch(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                      const OptimalPolicy& u_star,
                      const std::vector<VectorXd>& z_samples, int jobs = 1);

LossReport loss_batch(const NormalFormSystem& nf, const MlpParams& params,
                      const QuadraticCost& cost, const IlqrConfig& cfg,
                      const std::vector<VectorXd>& z_samples, int jobs = 1);

struct LossGradient {
  VectorXd grad;  // of LossReport::mean_squared, MlpParams::flatten order
  LossReport report;
};

/// Gradient of the mean squared invariance residual. With freeze_u_star the
/// optimal input is treated as a constant per sample.
LossGradient loss_gradient(const NormalFormSystem& nf, const MlpParams& params,
                           const OptimalPolicy& u_star,
                           const std::vector<VectorXd>& z_samples, int jobs = 1,
                           bool freeze_u_star = false);

LossGradient loss_gradient(const NormalFormSystem& nf, const MlpParams& params,
                           const QuadraticCost& cost, const IlqrConfig& cfg,
                           const std::vector<VectorXd>& z_samples, int jobs = 1);

std::vector<VectorXd> sample_box(const VectorXd& lo, const VectorXd& hi, int count,
                                 std::uint64_t seed);

struct PretrainResult {
  MlpParams params;
  double mse = 0.0;
  int steps = 0;
};

/// Regresses the network onto a linear target psi_lin(z) = target z.
PretrainResult pretrain(const MlpParams& params, const MatrixXd& target,
                        const TrainConfig& cfg);

struct HistoryEntry {
  int step = 0;
  double mean_residual = 0.0;
  double max_residual = 0.0;
};

struct TrainResult {
  MlpParams params;
  std::vector<HistoryEntry> history;
  double initial_loss = 0.0;  // held-out mean residual before training
  double final_loss = 0.0;    // held-out mean residual after training
};

/// Stochastic descent on freshly sampled batches with a cosine step-size
/// decay, optionally projected onto psi(0) = 0 after each step. Throws
/// ZdpError(kTrainingDiverged) when the smoothed batch loss exceeds 10x the
/// initial held-out loss.
TrainResult train(const NormalFormSystem& nf, const MlpParams& params,
                  const QuadraticCost& cost, const TrainConfig& train_cfg,
                  const IlqrConfig& ilqr_cfg);

TrainResult train(const NormalFormSystem& nf, const MlpParams& params,
                  const OptimalPolicy& u_star, const TrainConfig& train_cfg);

/// Mean of the last `window` entries' mean residuals.
double smoothed_tail(const std::vector<HistoryEntry>& history, int window);

}  // namespace zdp
