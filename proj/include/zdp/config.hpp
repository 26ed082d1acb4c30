#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zdp/dynamics.hpp"
#include "zdp/learning.hpp"
#include "zdp/linear_zdp.hpp"
#include "zdp/mlp.hpp"
#include "zdp/ocp.hpp"
#include "zdp/runtime.hpp"

namespace zdp {

/// Everything a pipeline run needs. Parsed from a sectioned key = value file;
/// unit suffixes are part of the key names.
struct ExperimentConfig {
  // [system]
  std::string system_kind = "cartpole";  // cartpole | linear
  CartpoleParams cartpole;
  int linear_gamma = 2;
  std::vector<double> linear_a_eta;  // nz x gamma, row-major
  std::vector<double> linear_a_z;    // nz x nz, row-major

  // [construct]
  std::vector<double> poles{-1.0, -2.0, -3.0, -4.0};
  SubspacePreference subspace = SubspacePreference::kBestConditioned;

  // [cost]
  std::vector<double> q_diag{1.0, 1.0, 1.0, 1.0};
  double r = 0.01;

  // [ilqr]
  IlqrConfig ilqr;

  // [network] and [training]
  std::vector<int> hidden{64, 64};
  Activation activation = Activation::kRelu;
  bool skip = true;
  TrainConfig train;

  // [tracking]
  double kp = 25.0;
  double kd = 10.0;

  // [simulate]
  SimConfig sim;
  std::vector<double> initial_state{0.0, 0.05, 0.0, 0.0};  // original coordinates

  // [roa]
  RoaGrid roa;
  SettleConfig settle;

  // [verify]
  int verify_samples = 64;
  double verify_radius = 0.05;
  double verify_residual_tol = 1e-2;
  double verify_decoupling_tol = 1e-3;

  // [run]
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string output_dir = "out";

  ExperimentConfig();

  /// Throws ZdpError(kValidation) on inconsistent or out-of-range values.
  void validate() const;
  QuadraticCost cost() const;
  TrackingGains gains() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace zdp
