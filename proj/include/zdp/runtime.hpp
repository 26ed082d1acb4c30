#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zdp/dynamics.hpp"
#include "zdp/linalg.hpp"
#include "zdp/policy.hpp"
#include "zdp/trajectory.hpp"

namespace zdp {

/// e = (y, y', ..., y^(gamma-1)) for the output y = eta_1 - psi_1(z).
struct ErrorCoords {
  VectorXd e;
};

/// Output derivatives at a state: the error stack plus the affine map
/// y^(gamma) = a + p u under the auxiliary input u.
struct OutputJet {
  VectorXd e;
  double a = 0.0;
  double p = 1.0;
};

/// Exact for gamma <= 2; nested central differences beyond that, which
/// requires omega to be independent of eta_3, eta_4, ...
OutputJet output_jet(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                     const VectorXd& zeta);

/// State over z with e = 0: eta_1 = psi_1(z) and eta_2..eta_gamma solved by
/// Newton so the output derivatives vanish. Equals (psi(z), z) when the graph
/// of psi is invariant. Throws ZdpError(kNoConvergence) on failure.
VectorXd zeroing_manifold_point(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                                const VectorXd& z);

ErrorCoords error_coordinates(const NormalFormSystem& nf,
                              const ZeroDynamicsPolicy& psi, const NzState& zeta);

/// Coefficients k_1..k_gamma of y^(gamma) = -sum k_i e_i.
struct TrackingGains {
  std::vector<double> k;

  static TrackingGains pd(double kp, double kd) { return {{kp, kd}}; }
};

/// State feedback returning the physical input at a normal-form state.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual double input(const VectorXd& zeta) const = 0;
  virtual std::string name() const = 0;
};

/// Output tracking of eta_1 -> psi_1(z): feedback linearization of the
/// output with PD error feedback. On the zeroing manifold the applied input is
/// the unique one keeping the manifold invariant.
class TrackingController final : public Controller {
 public:
  TrackingController(NormalFormSystem nf, std::shared_ptr<const ZeroDynamicsPolicy> psi,
                     TrackingGains gains, std::string name = "zdp");

  double input(const VectorXd& zeta) const override;
  /// The auxiliary input before feedback linearization.
  double aux_input(const VectorXd& zeta) const;
  std::string name() const override { return name_; }

 private:
  NormalFormSystem nf_;
  std::shared_ptr<const ZeroDynamicsPolicy> psi_;
  TrackingGains gains_;
  std::string name_;
  double min_decoupling_ = 1e-6;
};

/// v = -K x on the original coordinates x = from_nz(zeta).
class LinearStateFeedback final : public Controller {
 public:
  LinearStateFeedback(NormalFormSystem nf, Eigen::RowVectorXd k, std::string name = "lqr");

  double input(const VectorXd& zeta) const override;
  std::string name() const override { return name_; }

 private:
  NormalFormSystem nf_;
  Eigen::RowVectorXd k_;
  std::string name_;
};

class FunctionController final : public Controller {
 public:
  FunctionController(std::function<double(const VectorXd&)> fn, std::string name)
      : fn_(std::move(fn)), name_(std::move(name)) {}
  double input(const VectorXd& zeta) const override { return fn_(zeta); }
  std::string name() const override { return name_; }

 private:
  std::function<double(const VectorXd&)> fn_;
  std::string name_;
};

/// LQR on the linearization of the original system, wrapped for normal-form
/// states.
std::shared_ptr<Controller> make_lqr_baseline(const NormalFormSystem& nf,
                                              const ControlAffineSystem& sys,
                                              const MatrixXd& q, double r);

struct SimConfig {
  double t_final = 10.0;
  double dt = 0.01;
  double escape_bound = 50.0;

  int steps() const;
  void validate() const;
};

/// Fixed-step RK4 on the physical dynamics with the controller evaluated at
/// every stage. inputs[k] is the physical input at times[k]. The aux
/// invariance residual is |eta - psi(z)| (psi == 0 when no policy is given).
/// Stops early with escaped = true past the escape bound; throws
/// ZdpError(kNonFinite) on NaN/Inf.
Trajectory simulate(const NormalFormSystem& nf, const Controller& controller,
                    const VectorXd& zeta0, const SimConfig& cfg,
                    const ZeroDynamicsPolicy* diagnostics_policy = nullptr);

/// Same integrator on x' = drift(x) + actuation(x) v(x); aux is left zero.
Trajectory simulate(const ControlAffineSystem& sys,
                    const std::function<double(const VectorXd&)>& feedback,
                    const VectorXd& x0, const SimConfig& cfg);

/// z' = omega(psi(z), z); states hold the stacked (psi(z), z).
Trajectory simulate_zero_dynamics(const NormalFormSystem& nf,
                                  const ZeroDynamicsPolicy& psi, const VectorXd& z0,
                                  const SimConfig& cfg);

/// Envelope s(t) ~ m exp(-lambda t).
struct ExponentialFit {
  double m = 0.0;
  double lambda = 0.0;
  double rmse = 0.0;  // of the log-linear fit
  int samples = 0;
};

/// Least-squares line through log s(t) over samples with s >= floor. Throws
/// ZdpError(kAllBelowFloor) when the first sample is under the floor.
ExponentialFit fit_exponential_envelope(const std::vector<double>& times,
                                        const std::vector<double>& signal,
                                        double floor = 1e-9);

ExponentialFit fit_exponential_envelope(
    const Trajectory& traj, const std::function<double(std::size_t)>& signal,
    double floor = 1e-9);

/// Smallest M with s(t) <= M exp(-lambda t) s(0) over the samples.
double envelope_constant(const std::vector<double>& times,
                         const std::vector<double>& signal, double lambda);

struct RoaGrid {
  double theta_min = -3.141592653589793;
  double theta_max = 3.141592653589793;
  int theta_cells = 61;
  double theta_dot_min = -6.0;
  double theta_dot_max = 6.0;
  int theta_dot_cells = 61;

  void validate() const;
  std::vector<double> thetas() const;
  std::vector<double> theta_dots() const;
};

struct SettleConfig {
  double t_final = 10.0;
  double dt = 0.01;
  double settle_tol = 0.05;
  double escape_bound = 50.0;

  void validate() const;
};

struct NamedController {
  std::string name;
  std::shared_ptr<const Controller> controller;
};

/// Cells are stored theta-major: index = i_theta * theta_dot_cells + i_dot.
struct RoaResult {
  std::vector<double> thetas;
  std::vector<double> theta_dots;
  std::vector<std::string> controllers;
  std::vector<std::vector<char>> success;         // [controller][cell]
  std::vector<std::vector<double>> settle_times;  // NaN when not settled

  std::size_t cells() const { return thetas.size() * theta_dots.size(); }
  int success_count(std::size_t controller) const;
};

/// Physical start (x, theta, xdot, thetadot) = (0, theta, 0, thetadot) per
/// cell. A cell succeeds when |zeta(T)| < settle_tol without escaping;
/// numerical failures inside a simulation count as failures.
RoaResult roa_sweep(const NormalFormSystem& nf, const std::vector<NamedController>& controllers,
                    const RoaGrid& grid, const SettleConfig& settle, int jobs = 1);

struct InvarianceStats {
  double max_drift = 0.0;      // max_t |eta(t) - psi(z(t))|
  double max_tangency = 0.0;   // max_t |eta' - (dpsi/dz) z'|
  std::vector<double> drift;   // per sample
};

/// inputs are taken as the physical inputs recorded by simulate().
InvarianceStats verify_invariance_along_trajectory(const NormalFormSystem& nf,
                                                   const ZeroDynamicsPolicy& psi,
                                                   const Trajectory& traj);

}  // namespace zdp
