#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "zdp/dynamics.hpp"
#include "zdp/linalg.hpp"
#include "zdp/trajectory.hpp"

namespace zdp {

/// Running cost zeta^T Q zeta + r u^2 on the auxiliary input.
struct QuadraticCost {
  MatrixXd q;
  double r = 0.01;

  void validate() const;
  double running(const VectorXd& zeta, double u) const {
    double quad = 0.0;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      for (Eigen::Index i = 0; i < q.rows(); ++i) quad += zeta(i) * q(i, j) * zeta(j);
    }
    return quad + r * u * u;
  }
};

struct IlqrConfig {
  double horizon_seconds = 5.0;
  double dt = 0.01;
  int max_iters = 50;
  double cost_tol = 1e-4;
  double regularization = 1e-6;
  std::vector<double> line_search_betas{1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125};
  double escape_bound = 50.0;

  int steps() const;
  void validate() const;
};

struct IlqrSolution {
  std::vector<VectorXd> nominal_states;  // N + 1 samples
  std::vector<double> nominal_inputs;    // N, held over each step
  std::vector<Eigen::RowVectorXd> feedback_gains;  // u = u_k - K_k (zeta - zeta_k)
  std::vector<double> cost_to_go;        // N + 1 samples
  std::vector<double> cost_history;      // accepted iterations
  double cost = 0.0;
  bool converged = false;
  int iterations = 0;
  double dt = 0.0;
};

struct OptimalControl {
  double u_star = 0.0;
  Eigen::RowVectorXd du_dzeta;
};

/// iLQR with a continuous-time Riccati backward pass and an LQR terminal
/// value. The terminal LQR solution is computed once per solver.
class IlqrSolver {
 public:
  IlqrSolver(NormalFormSystem nf, QuadraticCost cost, IlqrConfig cfg);

  /// Throws ZdpError(kDiverged) when no finite in-box initial rollout exists.
  IlqrSolution solve(const VectorXd& zeta0,
                     const IlqrSolution* warm_start = nullptr) const;

  OptimalControl query(const VectorXd& zeta0) const;

  const LqrSolution& terminal() const { return terminal_; }
  const IlqrConfig& config() const { return cfg_; }
  const QuadraticCost& cost() const { return cost_; }
  const NormalFormSystem& system() const { return nf_; }

 private:
  static constexpr int kMaxStates = 8;

  struct Rollout {
    std::vector<VectorXd> states;
    std::vector<double> inputs;
    std::vector<double> running_integral;  // N + 1, integral up to step k
    double total = 0.0;
    bool ok = false;
  };

  Rollout rollout_lqr(const VectorXd& zeta0) const;
  Rollout rollout_open_loop(const VectorXd& zeta0, const std::vector<double>& u) const;
  Rollout rollout_policy(const VectorXd& zeta0, const Rollout& nominal,
                         const std::vector<double>& ff,
                         const std::vector<Eigen::RowVectorXd>& gains,
                         double alpha) const;
  template <typename Policy>
  Rollout rollout(const VectorXd& zeta0, Policy&& policy) const;
  void backward(const Rollout& nominal, double mu, std::vector<double>& ff,
                std::vector<Eigen::RowVectorXd>& gains) const;
  MatrixXd state_jacobian(const VectorXd& zeta) const;

  NormalFormSystem nf_;
  QuadraticCost cost_;
  IlqrConfig cfg_;
  LqrSolution terminal_;
};

IlqrSolution ilqr_solve(const NormalFormSystem& nf, const QuadraticCost& cost,
                        const NzState& zeta0, const IlqrConfig& cfg);

/// u*(zeta) as the first nominal input and du*/dzeta as minus the first
/// feedback gain.
OptimalControl optimal_control_query(const NormalFormSystem& nf,
                                     const QuadraticCost& cost,
                                     const NzState& zeta, const IlqrConfig& cfg);

struct ValueDecreaseReport {
  std::vector<double> times;
  std::vector<double> vdot;   // finite difference of the cost-to-go
  std::vector<double> bound;  // -lambda_min(Q) |zeta|^2
  bool holds = true;
  double worst_ratio = 0.0;   // max over samples of vdot / bound (>= 1 - slack ok)
};

/// Checks vdot <= -(1 - slack) lambda_min(Q) |zeta|^2 along the solution.
ValueDecreaseReport value_decrease_check(const IlqrSolver& solver,
                                         const IlqrSolution& sol,
                                         double slack = 0.1);

ValueDecreaseReport value_decrease_check(const NormalFormSystem& nf,
                                         const QuadraticCost& cost,
                                         const NzState& zeta0,
                                         const IlqrConfig& cfg,
                                         double slack = 0.1);

/// Receding-horizon rollout: re-solves every replan_interval seconds (warm
/// started from the shifted previous plan) and applies the local affine
/// policy in between. Physical dynamics via feedback linearization.
Trajectory optimal_closed_loop(const IlqrSolver& solver, const VectorXd& zeta0,
                               double t_final, double replan_interval);

}  // namespace zdp
