#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace zdp {

/// Per-sample diagnostics recorded by the simulator.
struct StepDiagnostics {
  double e_norm = 0.0;
  double z_norm = 0.0;
  double invariance_residual = 0.0;
};

/// Uniformly sampled closed-loop trajectory in normal-form coordinates.
struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<double> inputs;
  std::vector<StepDiagnostics> aux;
  bool escaped = false;
  std::string controller;
  std::string failure;  // set when a simulation ended on a numerical error

  std::size_t size() const { return times.size(); }
};

}  // namespace zdp
