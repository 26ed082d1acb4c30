#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zdp/learning.hpp"
#include "zdp/linear_zdp.hpp"
#include "zdp/mlp.hpp"
#include "zdp/runtime.hpp"
#include "zdp/trajectory.hpp"

namespace zdp {

/// Output of the constructive step: the subspace, output map and gain.
struct LinearZdpModel {
  std::string system;
  int gamma = 0;
  int nz = 0;
  std::vector<double> poles;
  InvariantSubspace subspace;
  LinearZdp zdp;

  /// psi_lin(z) = M z with M = S_eta^T.
  MatrixXd psi_matrix() const { return subspace.s_eta.transpose(); }
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int steps = 0;
  int batch_size = 0;
  double learning_rate = 0.0;
  std::string optimizer;
  int pretrain_steps = 0;
  double pretrain_mse = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Trained network plus the linear data it was pretrained against.
struct Checkpoint {
  std::string system;
  MlpParams params;
  MatrixXd psi_lin;  // gamma x nz
  MatrixXd s;        // n x nz
  TrainingMetadata meta;
};

std::string linear_model_to_json(const LinearZdpModel& model);
LinearZdpModel linear_model_from_json(const std::string& text);
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

/// "linear-zdp" or "mlp-zdp"; throws ZdpError(kValidation) otherwise.
std::string model_kind(const std::string& text);

std::string trajectory_csv(const Trajectory& traj, int gamma);
std::string roa_csv(const RoaResult& result);
std::string loss_history_csv(const std::vector<HistoryEntry>& history);

std::string read_text(const std::string& path);
/// Creates parent directories as needed.
void write_text(const std::string& path, const std::string& text);

}  // namespace zdp
