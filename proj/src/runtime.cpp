#include "zdp/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

#include "zdp/errors.hpp"
#include "zdp/parallel.hpp"

namespace zdp {

namespace {

// zeta' with zero auxiliary input: (F eta, omega).
VectorXd drift_direction(const NormalFormSystem& nf, const VectorXd& zeta) {
  VectorXd d(zeta.size());
  d.head(nf.gamma) = nf.f_mat * zeta.head(nf.gamma);
  d.tail(nf.nz) = nf.omega_at(zeta);
  return d;
}

// Central difference of a scalar field along a direction.
double directional(const std::function<double(const VectorXd&)>& h, const VectorXd& zeta,
                   const VectorXd& dir, double rel_step) {
  const double norm = dir.norm();
  if (norm == 0.0) return 0.0;
  const double step = rel_step * std::max(1.0, zeta.norm());
  const VectorXd unit = dir / norm;
  return norm * (h(zeta + step * unit) - h(zeta - step * unit)) / (2.0 * step);
}

// y' = eta_2 - grad psi_1 . omega (gamma >= 2).
double first_derivative(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                        const VectorXd& zeta) {
  const VectorXd z = zeta.tail(nf.nz);
  return zeta(1) - psi.jacobian(z).row(0).dot(nf.omega_at(zeta));
}

}  // namespace

OutputJet output_jet(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                     const VectorXd& zeta) {
  const int gamma = nf.gamma;
  const VectorXd eta = zeta.head(gamma);
  const VectorXd z = zeta.tail(nf.nz);
  const VectorXd omega = nf.omega_at(zeta);
  const MatrixXd jac = psi.jacobian(z);
  OutputJet out;
  out.e.resize(gamma);
  out.e(0) = eta(0) - psi.eval(z)(0);
  if (gamma == 1) {
    out.a = -jac.row(0).dot(omega);
    out.p = 1.0;
    return out;
  }
  out.e(1) = eta(1) - jac.row(0).dot(omega);
  const VectorXd drift = drift_direction(nf, zeta);
  VectorXd along_eta_gamma = VectorXd::Zero(zeta.size());
  along_eta_gamma(gamma - 1) = 1.0;

  if (gamma == 2) {
    // y'' = eta_2' - omega^T H omega - grad psi_1 . (d omega along zeta').
    const double step = 1e-5 * std::max(1.0, zeta.norm());
    const double speed = drift.norm();
    VectorXd domega = VectorXd::Zero(nf.nz);
    if (speed > 0.0) {
      const VectorXd unit = drift / speed;
      domega = speed * (nf.omega_at(zeta + step * unit) - nf.omega_at(zeta - step * unit)) /
               (2.0 * step);
    }
    const double curvature = psi.jacobian_dot(z, omega).row(0).dot(omega);
    out.a = drift(1) - curvature - jac.row(0).dot(domega);
    const VectorXd domega_deta2 =
        (nf.omega_at(zeta + step * along_eta_gamma) - nf.omega_at(zeta - step * along_eta_gamma)) /
        (2.0 * step);
    out.p = 1.0 - jac.row(0).dot(domega_deta2);
    return out;
  }

  if (assumption_one_violation(nf, NzState::split(zeta, gamma)) > 1e-6) {
    throw ZdpError(ErrorKind::kValidation,
                   "omega depends on eta_3 or higher; the error chain is undefined");
  }
  // h_1 = y, h_2 = y', h_{i+1} = D h_i [zeta'] by nested differences.
  constexpr double kNestedStep = 1e-4;
  std::function<double(int, const VectorXd&)> h = [&](int i, const VectorXd& x) -> double {
    if (i == 2) return first_derivative(nf, psi, x);
    return directional([&](const VectorXd& y) { return h(i - 1, y); }, x,
                       drift_direction(nf, x), kNestedStep);
  };
  for (int i = 3; i <= gamma; ++i) out.e(i - 1) = h(i, zeta);
  const auto top = [&](const VectorXd& x) { return h(gamma, x); };
  out.a = directional(top, zeta, drift, kNestedStep);
  out.p = directional(top, zeta, along_eta_gamma, kNestedStep);
  return out;
}

VectorXd zeroing_manifold_point(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                                const VectorXd& z) {
  const int gamma = nf.gamma;
  VectorXd zeta(nf.n());
  zeta << psi.eval(z), z;
  if (gamma == 1) return zeta;
  const int free = gamma - 1;
  const auto residual = [&](const VectorXd& upper) {
    VectorXd x = zeta;
    x.segment(1, free) = upper;
    return VectorXd(output_jet(nf, psi, x).e.tail(free));
  };
  VectorXd upper = zeta.segment(1, free);
  for (int it = 0; it < 50; ++it) {
    const VectorXd r = residual(upper);
    if (r.norm() <= 1e-13 * std::max(1.0, zeta.norm())) {
      zeta.segment(1, free) = upper;
      return zeta;
    }
    const MatrixXd jac = jacobian_fd(residual, upper, 1e-6);
    upper -= jac.fullPivLu().solve(r);
    if (!upper.allFinite()) break;
  }
  const VectorXd r = residual(upper);
  if (!(r.norm() <= 1e-9 * std::max(1.0, zeta.norm()))) {
    throw ZdpError(ErrorKind::kNoConvergence, "could not place the state on the zeroing manifold");
  }
  zeta.segment(1, free) = upper;
  return zeta;
}

ErrorCoords error_coordinates(const NormalFormSystem& nf,
                              const ZeroDynamicsPolicy& psi, const NzState& zeta) {
  return {output_jet(nf, psi, zeta.stacked()).e};
}

TrackingController::TrackingController(NormalFormSystem nf,
                                       std::shared_ptr<const ZeroDynamicsPolicy> psi,
                                       TrackingGains gains, std::string name)
    : nf_(std::move(nf)), psi_(std::move(psi)), gains_(std::move(gains)),
      name_(std::move(name)) {
  if (!psi_ || psi_->gamma() != nf_.gamma || psi_->nz() != nf_.nz) {
    throw ZdpError(ErrorKind::kValidation, "policy dimensions do not match the system");
  }
  if (static_cast<int>(gains_.k.size()) != nf_.gamma) {
    throw ZdpError(ErrorKind::kValidation, "tracking needs one gain per output derivative");
  }
}

double TrackingController::aux_input(const VectorXd& zeta) const {
  const OutputJet jet = output_jet(nf_, *psi_, zeta);
  if (std::abs(jet.p) < min_decoupling_) {
    throw ZdpError(ErrorKind::kRelativeDegreeLoss,
                   "output relative degree lost at the current state");
  }
  double feedback = 0.0;
  for (int i = 0; i < nf_.gamma; ++i) feedback += gains_.k[i] * jet.e(i);
  return (-jet.a - feedback) / jet.p;
}

double TrackingController::input(const VectorXd& zeta) const {
  return feedback_linearize(nf_, NzState::split(zeta, nf_.gamma), aux_input(zeta));
}

LinearStateFeedback::LinearStateFeedback(NormalFormSystem nf, Eigen::RowVectorXd k,
                                         std::string name)
    : nf_(std::move(nf)), k_(std::move(k)), name_(std::move(name)) {}

double LinearStateFeedback::input(const VectorXd& zeta) const {
  return -k_.dot(nf_.from_nz(NzState::split(zeta, nf_.gamma)));
}

std::shared_ptr<Controller> make_lqr_baseline(const NormalFormSystem& nf,
                                              const ControlAffineSystem& sys,
                                              const MatrixXd& q, double r) {
  const LqrSolution lqr = lqr_gain(linearize_system(sys), q, r);
  return std::make_shared<LinearStateFeedback>(nf, lqr.gain.k, "lqr");
}

int SimConfig::steps() const { return static_cast<int>(std::lround(t_final / dt)); }

void SimConfig::validate() const {
  if (!(dt > 0.0) || !(t_final >= 0.0) || !(escape_bound > 0.0)) {
    throw ZdpError(ErrorKind::kValidation, "simulation needs dt > 0, t_final >= 0");
  }
}

namespace {

template <typename Rhs>
VectorXd rk4_step(const Rhs& rhs, const VectorXd& x, double h) {
  const VectorXd k1 = rhs(x);
  const VectorXd k2 = rhs(x + 0.5 * h * k1);
  const VectorXd k3 = rhs(x + 0.5 * h * k2);
  const VectorXd k4 = rhs(x + h * k3);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

StepDiagnostics diagnose(const NormalFormSystem& nf, const ZeroDynamicsPolicy* psi,
                         const VectorXd& zeta) {
  StepDiagnostics d;
  const VectorXd eta = zeta.head(nf.gamma);
  const VectorXd z = zeta.tail(nf.nz);
  d.z_norm = z.norm();
  if (psi == nullptr) {
    d.e_norm = eta.norm();
    d.invariance_residual = eta.norm();
    return d;
  }
  d.invariance_residual = (eta - psi->eval(z)).norm();
  d.e_norm = output_jet(nf, *psi, zeta).e.norm();
  return d;
}

// Shared fixed-step loop. rhs(x) evaluates the closed loop; input(x) gives the
// recorded input; diag(x) the diagnostics.
template <typename Rhs, typename Input, typename Diag>
Trajectory integrate(const Rhs& rhs, const Input& input, const Diag& diag,
                     const VectorXd& x0, const SimConfig& cfg) {
  cfg.validate();
  if (!x0.allFinite()) throw ZdpError(ErrorKind::kNonFinite, "non-finite initial state");
  Trajectory traj;
  const int steps = cfg.steps();
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  VectorXd x = x0;
  for (int k = 0;; ++k) {
    traj.times.push_back(k * cfg.dt);
    traj.states.push_back(x);
    traj.inputs.push_back(input(x));
    traj.aux.push_back(diag(x));
    if (k == steps) break;
    x = rk4_step(rhs, x, cfg.dt);
    if (!x.allFinite()) {
      throw ZdpError(ErrorKind::kNonFinite,
                     "state became non-finite at t = " + std::to_string((k + 1) * cfg.dt));
    }
    if (x.norm() > cfg.escape_bound) {
      traj.escaped = true;
      break;
    }
  }
  return traj;
}

}  // namespace

Trajectory simulate(const NormalFormSystem& nf, const Controller& controller,
                    const VectorXd& zeta0, const SimConfig& cfg,
                    const ZeroDynamicsPolicy* diagnostics_policy) {
  if (zeta0.size() != nf.n()) {
    throw ZdpError(ErrorKind::kValidation, "initial state has the wrong dimension");
  }
  Trajectory traj = integrate(
      [&](const VectorXd& x) { return nf.physical_rhs(x, controller.input(x)); },
      [&](const VectorXd& x) { return controller.input(x); },
      [&](const VectorXd& x) { return diagnose(nf, diagnostics_policy, x); }, zeta0, cfg);
  traj.controller = controller.name();
  return traj;
}

Trajectory simulate(const ControlAffineSystem& sys,
                    const std::function<double(const VectorXd&)>& feedback,
                    const VectorXd& x0, const SimConfig& cfg) {
  if (x0.size() != sys.n) {
    throw ZdpError(ErrorKind::kValidation, "initial state has the wrong dimension");
  }
  Trajectory traj = integrate(
      [&](const VectorXd& x) { return sys.rhs(x, feedback(x)); },
      [&](const VectorXd& x) { return feedback(x); },
      [](const VectorXd&) { return StepDiagnostics{}; }, x0, cfg);
  traj.controller = "feedback";
  return traj;
}

Trajectory simulate_zero_dynamics(const NormalFormSystem& nf,
                                  const ZeroDynamicsPolicy& psi, const VectorXd& z0,
                                  const SimConfig& cfg) {
  if (z0.size() != nf.nz) {
    throw ZdpError(ErrorKind::kValidation, "zero-coordinate start has the wrong dimension");
  }
  const auto lift = [&](const VectorXd& z) {
    VectorXd zeta(nf.n());
    zeta << psi.eval(z), z;
    return zeta;
  };
  Trajectory zt = integrate(
      [&](const VectorXd& z) { return nf.omega_at(lift(z)); },
      [](const VectorXd&) { return 0.0; },
      [](const VectorXd& z) {
        StepDiagnostics d;
        d.z_norm = z.norm();
        return d;
      },
      z0, cfg);
  for (auto& s : zt.states) s = lift(s);
  zt.controller = "zero-dynamics";
  return zt;
}

ExponentialFit fit_exponential_envelope(const std::vector<double>& times,
                                        const std::vector<double>& signal, double floor) {
  if (times.size() != signal.size() || times.empty()) {
    throw ZdpError(ErrorKind::kValidation, "envelope fit needs matching, non-empty samples");
  }
  if (!(signal.front() >= floor)) {
    throw ZdpError(ErrorKind::kAllBelowFloor, "signal starts below the fit floor");
  }
  std::vector<double> ts;
  std::vector<double> ls;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (signal[i] >= floor && std::isfinite(signal[i])) {
      ts.push_back(times[i]);
      ls.push_back(std::log(signal[i]));
    }
  }
  ExponentialFit fit;
  fit.samples = static_cast<int>(ts.size());
  if (ts.size() == 1) {
    fit.m = signal.front();
    return fit;
  }
  Eigen::MatrixXd design(ts.size(), 2);
  Eigen::VectorXd rhs(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = ts[i];
    rhs(i) = ls[i];
  }
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(rhs);
  fit.m = std::exp(coef(0));
  fit.lambda = -coef(1);
  fit.rmse = std::sqrt((design * coef - rhs).squaredNorm() / static_cast<double>(ts.size()));
  return fit;
}

ExponentialFit fit_exponential_envelope(const Trajectory& traj,
                                        const std::function<double(std::size_t)>& signal,
                                        double floor) {
  std::vector<double> values(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) values[i] = signal(i);
  return fit_exponential_envelope(traj.times, values, floor);
}

double envelope_constant(const std::vector<double>& times, const std::vector<double>& signal,
                         double lambda) {
  if (times.empty() || signal.size() != times.size() || !(signal.front() > 0.0)) {
    throw ZdpError(ErrorKind::kValidation, "envelope constant needs a positive first sample");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    m = std::max(m, signal[i] * std::exp(lambda * (times[i] - times.front())) / signal.front());
  }
  return m;
}

void RoaGrid::validate() const {
  if (theta_cells <= 0 || theta_dot_cells <= 0 || theta_max < theta_min ||
      theta_dot_max < theta_dot_min) {
    throw ZdpError(ErrorKind::kValidation, "region-of-attraction grid is empty");
  }
}

namespace {

std::vector<double> lattice(double lo, double hi, int cells) {
  std::vector<double> out(cells);
  for (int i = 0; i < cells; ++i) {
    out[i] = cells == 1 ? lo : lo + (hi - lo) * i / (cells - 1);
  }
  return out;
}

}  // namespace

std::vector<double> RoaGrid::thetas() const { return lattice(theta_min, theta_max, theta_cells); }

std::vector<double> RoaGrid::theta_dots() const {
  return lattice(theta_dot_min, theta_dot_max, theta_dot_cells);
}

void SettleConfig::validate() const {
  if (!(t_final > 0.0) || !(dt > 0.0) || !(settle_tol > 0.0) || !(escape_bound > 0.0)) {
    throw ZdpError(ErrorKind::kValidation, "settle settings must be positive");
  }
}

int RoaResult::success_count(std::size_t controller) const {
  return static_cast<int>(
      std::count(success.at(controller).begin(), success.at(controller).end(), 1));
}

RoaResult roa_sweep(const NormalFormSystem& nf, const std::vector<NamedController>& controllers,
                    const RoaGrid& grid, const SettleConfig& settle, int jobs) {
  grid.validate();
  settle.validate();
  if (nf.n() != 4) {
    throw ZdpError(ErrorKind::kValidation, "the (theta, theta_dot) sweep expects the cartpole");
  }
  RoaResult result;
  result.thetas = grid.thetas();
  result.theta_dots = grid.theta_dots();
  const std::size_t cells = result.cells();
  const SimConfig sim{settle.t_final, settle.dt, settle.escape_bound};
  for (const auto& c : controllers) {
    result.controllers.push_back(c.name);
    result.success.emplace_back(cells, 0);
    result.settle_times.emplace_back(cells, std::numeric_limits<double>::quiet_NaN());
  }
  const std::size_t tasks = cells * controllers.size();
  parallel_for(tasks, jobs, [&](std::size_t task) {
    const std::size_t ci = task / cells;
    const std::size_t cell = task % cells;
    const std::size_t it = cell / result.theta_dots.size();
    const std::size_t id = cell % result.theta_dots.size();
    VectorXd x(4);
    x << 0.0, result.thetas[it], 0.0, result.theta_dots[id];
    const VectorXd zeta0 = nf.to_nz(x).stacked();
    try {
      const Trajectory traj = simulate(nf, *controllers[ci].controller, zeta0, sim);
      if (traj.escaped || traj.states.back().norm() >= settle.settle_tol) return;
      result.success[ci][cell] = 1;
      std::size_t first = traj.size();
      while (first > 0 && traj.states[first - 1].norm() < settle.settle_tol) --first;
      result.settle_times[ci][cell] = traj.times[first];
    } catch (const ZdpError& e) {
      if (e.kind() == ErrorKind::kValidation) throw;
      spdlog::debug("roa cell ({}, {}) under {} failed: {}", result.thetas[it],
                    result.theta_dots[id], controllers[ci].name, e.what());
    }
  });
  return result;
}

InvarianceStats verify_invariance_along_trajectory(const NormalFormSystem& nf,
                                                   const ZeroDynamicsPolicy& psi,
                                                   const Trajectory& traj) {
  InvarianceStats stats;
  stats.drift.reserve(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const NzState s = NzState::split(traj.states[i], nf.gamma);
    const double drift = (s.eta - psi.eval(s.z)).norm();
    stats.drift.push_back(drift);
    stats.max_drift = std::max(stats.max_drift, drift);
    if (i < traj.inputs.size()) {
      const VectorXd eta_dot = nf.fhat(s) + nf.ghat(s) * traj.inputs[i];
      const double tangency = (eta_dot - psi.jacobian(s.z) * nf.omega(s)).norm();
      stats.max_tangency = std::max(stats.max_tangency, tangency);
    }
  }
  return stats;
}

}  // namespace zdp
