#include "zdp/dynamics.hpp"

#include <cmath>

#include "zdp/errors.hpp"
#include "zdp/linalg.hpp"

namespace zdp {

void CartpoleParams::validate() const {
  if (!(cart_mass > 0) || !(pole_mass > 0) || !(pole_length > 0) ||
      !(gravity > 0)) {
    throw ZdpError(ErrorKind::kValidation,
                   "cartpole masses, length and gravity must be positive");
  }
  if (!(damping_threshold >= 0)) {
    throw ZdpError(ErrorKind::kValidation,
                   "damping threshold must be non-negative");
  }
}

VectorXd NzState::stacked() const {
  VectorXd zeta(eta.size() + z.size());
  zeta << eta, z;
  return zeta;
}

NzState NzState::split(const VectorXd& zeta, int gamma) {
  const auto nz = zeta.size() - gamma;
  return NzState{zeta.head(gamma), zeta.tail(nz)};
}

VectorXd NormalFormSystem::physical_rhs(const VectorXd& zeta, double v) const {
  const NzState s = NzState::split(zeta, gamma);
  VectorXd out(n());
  out.head(gamma) = fhat(s) + ghat(s) * v;
  out.tail(nz) = omega(s);
  return out;
}

VectorXd NormalFormSystem::linearized_rhs(const VectorXd& zeta, double u) const {
  const NzState s = NzState::split(zeta, gamma);
  VectorXd out(n());
  out.head(gamma).noalias() = f_mat * s.eta;
  out.head(gamma) += g_vec * u;
  out.tail(nz) = omega(s);
  return out;
}

VectorXd NormalFormSystem::omega_at(const VectorXd& zeta) const {
  return omega(NzState::split(zeta, gamma));
}

MatrixXd integrator_matrix(int gamma) {
  MatrixXd f = MatrixXd::Zero(gamma, gamma);
  for (int i = 0; i + 1 < gamma; ++i) f(i, i + 1) = 1.0;
  return f;
}

VectorXd integrator_input(int gamma) {
  VectorXd g = VectorXd::Zero(gamma);
  if (gamma > 0) g(gamma - 1) = 1.0;
  return g;
}

double cart_damping(double cart_velocity, double threshold) {
  return std::abs(cart_velocity) < threshold ? 0.0 : cart_velocity;
}

namespace {

// Accelerations of the cart and pole under force v.
struct CartpoleAccel {
  double xdd;
  double thdd;
};

CartpoleAccel cartpole_accel(const CartpoleParams& p, double theta,
                             double xdot, double thdot, double v) {
  const double s = std::sin(theta);
  const double c = std::cos(theta);
  const double denom = p.cart_mass + p.pole_mass * s * s;
  const double force = v - cart_damping(xdot, p.damping_threshold) +
                       p.pole_mass * s *
                           (p.pole_length * thdot * thdot - p.gravity * c);
  const double xdd = force / denom;
  const double thdd = (p.gravity * s - c * xdd) / p.pole_length;
  return {xdd, thdd};
}

}  // namespace

ControlAffineSystem cartpole_system(const CartpoleParams& params) {
  params.validate();
  ControlAffineSystem sys;
  sys.n = 4;
  sys.name = "cartpole";
  sys.drift = [params](const VectorXd& x) {
    const auto acc = cartpole_accel(params, x(1), x(2), x(3), 0.0);
    VectorXd dx(4);
    dx << x(2), x(3), acc.xdd, acc.thdd;
    return dx;
  };
  sys.actuation = [params](const VectorXd& x) {
    const double s = std::sin(x(1));
    const double c = std::cos(x(1));
    const double inv = 1.0 / (params.cart_mass + params.pole_mass * s * s);
    VectorXd g(4);
    g << 0.0, 0.0, inv, -c * inv / params.pole_length;
    return g;
  };
  return sys;
}

double cartpole_energy(const CartpoleParams& p, const VectorXd& x) {
  const double xd = x(2);
  const double thd = x(3);
  const double kinetic = 0.5 * (p.cart_mass + p.pole_mass) * xd * xd +
                         p.pole_mass * p.pole_length * xd * thd * std::cos(x(1)) +
                         0.5 * p.pole_mass * p.pole_length * p.pole_length * thd * thd;
  const double potential = p.pole_mass * p.gravity * p.pole_length * std::cos(x(1));
  return kinetic + potential;
}

NormalFormSystem cartpole_normal_form(const CartpoleParams& params) {
  params.validate();
  const double mp = params.pole_mass;
  const double l = params.pole_length;
  const double inertia = mp * l * l;

  NormalFormSystem nf;
  nf.gamma = 2;
  nf.nz = 2;
  nf.name = "cartpole";
  nf.f_mat = integrator_matrix(2);
  nf.g_vec = integrator_input(2);

  nf.to_nz = [=](const VectorXd& x) {
    NzState s{VectorXd(2), VectorXd(2)};
    s.eta << x(0), x(2);
    s.z << x(1), inertia * x(3) + mp * l * x(2) * std::cos(x(1));
    return s;
  };
  nf.from_nz = [=](const NzState& s) {
    const double theta = s.z(0);
    const double thdot = (s.z(1) - mp * l * s.eta(1) * std::cos(theta)) / inertia;
    VectorXd x(4);
    x << s.eta(0), theta, s.eta(1), thdot;
    return x;
  };
  nf.omega = [=](const NzState& s) {
    const double theta = s.z(0);
    const double xdot = s.eta(1);
    const double thdot = (s.z(1) - mp * l * xdot * std::cos(theta)) / inertia;
    VectorXd w(2);
    w << thdot,
        -mp * l * xdot * thdot * std::sin(theta) +
            mp * params.gravity * l * std::sin(theta);
    return w;
  };
  nf.fhat = [=](const NzState& s) {
    const double theta = s.z(0);
    const double xdot = s.eta(1);
    const double thdot = (s.z(1) - mp * l * xdot * std::cos(theta)) / inertia;
    const auto acc = cartpole_accel(params, theta, xdot, thdot, 0.0);
    VectorXd f(2);
    f << xdot, acc.xdd;
    return f;
  };
  nf.ghat = [=](const NzState& s) {
    const double st = std::sin(s.z(0));
    VectorXd g(2);
    g << 0.0, 1.0 / (params.cart_mass + mp * st * st);
    return g;
  };
  return nf;
}

NormalFormSystem linear_normal_form(const MatrixXd& a_eta, const MatrixXd& a_z,
                                    const std::string& name) {
  const int gamma = static_cast<int>(a_eta.cols());
  const int nz = static_cast<int>(a_z.rows());
  if (a_eta.rows() != nz || a_z.cols() != nz) {
    throw ZdpError(ErrorKind::kValidation, "linear normal form block shapes");
  }
  NormalFormSystem nf;
  nf.gamma = gamma;
  nf.nz = nz;
  nf.name = name;
  nf.f_mat = integrator_matrix(gamma);
  nf.g_vec = integrator_input(gamma);
  nf.to_nz = [gamma](const VectorXd& x) { return NzState::split(x, gamma); };
  nf.from_nz = [](const NzState& s) { return s.stacked(); };
  nf.omega = [a_eta, a_z](const NzState& s) -> VectorXd {
    return a_eta * s.eta + a_z * s.z;
  };
  const MatrixXd f = nf.f_mat;
  nf.fhat = [f](const NzState& s) -> VectorXd { return f * s.eta; };
  const VectorXd g = nf.g_vec;
  nf.ghat = [g](const NzState&) -> VectorXd { return g; };
  return nf;
}

double annihilation_residual(const NormalFormSystem& nf,
                             const ControlAffineSystem& sys,
                             const VectorXd& x) {
  const VectorMap phi_z = [&nf](const VectorXd& xs) -> VectorXd {
    return nf.to_nz(xs).z;
  };
  const MatrixXd jac = jacobian_fd(phi_z, x, 1e-6);
  return (jac * sys.actuation(x)).norm();
}

double feedback_linearize(const NormalFormSystem& nf, const NzState& zeta,
                          double u_aux, double tolerance) {
  const double decoupling = nf.ghat(zeta)(nf.gamma - 1);
  if (!(std::abs(decoupling) >= tolerance)) {
    throw ZdpError(ErrorKind::kSingularDecoupling,
                   "input decoupling term vanishes");
  }
  const double lf = nf.fhat(zeta)(nf.gamma - 1);
  return (u_aux - lf) / decoupling;
}

VectorXd zero_dynamics_rhs(const NormalFormSystem& nf,
                           const std::function<VectorXd(const VectorXd&)>& psi,
                           const VectorXd& z) {
  return nf.omega(NzState{psi(z), z});
}

double assumption_one_violation(const NormalFormSystem& nf,
                                const NzState& zeta) {
  if (nf.gamma <= 2) return 0.0;
  const VectorMap w = [&](const VectorXd& eta) -> VectorXd {
    return nf.omega(NzState{eta, zeta.z});
  };
  const MatrixXd d = jacobian_fd(w, zeta.eta);
  return d.rightCols(nf.gamma - 2).norm();
}

}  // namespace zdp
