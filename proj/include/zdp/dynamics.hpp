#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace zdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Single-input control-affine system xdot = drift(x) + actuation(x) v.
struct ControlAffineSystem {
  int n = 0;
  std::function<VectorXd(const VectorXd&)> drift;
  std::function<VectorXd(const VectorXd&)> actuation;
  std::string name;

  VectorXd rhs(const VectorXd& x, double v) const {
    return drift(x) + actuation(x) * v;
  }
};

struct CartpoleParams {
  double cart_mass = 1.0;          // kg
  double pole_mass = 0.1;          // kg
  double pole_length = 1.0;        // m
  double gravity = 9.8;            // m/s^2
  double damping_threshold = 1e-3; // m/s

  /// Throws ZdpError(kValidation) on non-physical values.
  void validate() const;
};

/// Split state: actuated output coordinates eta and input-free coordinates z.
struct NzState {
  VectorXd eta;
  VectorXd z;

  int size() const { return static_cast<int>(eta.size() + z.size()); }

  /// zeta = (eta, z) as one vector.
  VectorXd stacked() const;
  static NzState split(const VectorXd& zeta, int gamma);
};

/// Dynamics expressed in actuation-decomposed coordinates.
///
/// The raw output dynamics are eta_i' = eta_{i+1} for i < gamma and
/// eta_gamma' = fhat_gamma + ghat_gamma v under the physical input v. After
/// feedback linearization they become eta' = F eta + G u. The z block evolves
/// by omega(eta, z) and never sees the input.
struct NormalFormSystem {
  int gamma = 0;
  int nz = 0;
  std::function<NzState(const VectorXd&)> to_nz;
  std::function<VectorXd(const NzState&)> from_nz;
  std::function<VectorXd(const NzState&)> omega;
  MatrixXd f_mat;
  VectorXd g_vec;
  std::function<VectorXd(const NzState&)> fhat;
  std::function<VectorXd(const NzState&)> ghat;
  std::string name;

  int n() const { return gamma + nz; }

  /// zeta' under the physical input v.
  VectorXd physical_rhs(const VectorXd& zeta, double v) const;
  /// zeta' under the auxiliary (feedback-linearized) input u.
  VectorXd linearized_rhs(const VectorXd& zeta, double u) const;
  /// omega evaluated on a stacked zeta.
  VectorXd omega_at(const VectorXd& zeta) const;
};

/// Builds F (upper shift) and G = e_gamma for a chain of gamma integrators.
MatrixXd integrator_matrix(int gamma);
VectorXd integrator_input(int gamma);

/// Viscous damping with a dead zone: sigma(xd) xd, sigma = 0 below threshold.
double cart_damping(double cart_velocity, double threshold);

/// Four-state cartpole (x, theta, xdot, thetadot), theta measured from upright,
/// horizontal force on the cart.
ControlAffineSystem cartpole_system(const CartpoleParams& params);

/// Cartpole in coordinates eta = (x, xdot), z = (theta, p_theta) where
/// p_theta = m_p l^2 thetadot + m_p l xdot cos(theta).
NormalFormSystem cartpole_normal_form(const CartpoleParams& params);

/// Cartpole total mechanical energy for the undamped, unforced system.
double cartpole_energy(const CartpoleParams& params, const VectorXd& x);

/// Linear system already in normal form: eta' = F eta + G v,
/// z' = a_eta eta + a_z z with a_eta of shape (nz x gamma). Coordinates are
/// the identity map.
NormalFormSystem linear_normal_form(const MatrixXd& a_eta, const MatrixXd& a_z,
                                    const std::string& name = "linear");

/// || dPhi_z/dx(x) g_x(x) ||, Jacobian by central differences.
double annihilation_residual(const NormalFormSystem& nf,
                             const ControlAffineSystem& sys,
                             const VectorXd& x);

/// Physical input v realising eta_gamma'' = u_aux. Throws
/// ZdpError(kSingularDecoupling) when |ghat_gamma| < tolerance.
double feedback_linearize(const NormalFormSystem& nf, const NzState& zeta,
                          double u_aux, double tolerance = 1e-9);

/// omega(psi(z), z).
VectorXd zero_dynamics_rhs(const NormalFormSystem& nf,
                           const std::function<VectorXd(const VectorXd&)>& psi,
                           const VectorXd& z);

/// Max over i >= 3 of ||d omega / d eta_i|| by finite differences. Zero when
/// gamma <= 2.
double assumption_one_violation(const NormalFormSystem& nf,
                                const NzState& zeta);

}  // namespace zdp
