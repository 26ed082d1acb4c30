#include "zdp/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "zdp/errors.hpp"

namespace zdp {

void QuadraticCost::validate() const {
  if (q.rows() != q.cols() || q.rows() == 0) {
    throw ZdpError(ErrorKind::kValidation, "Q must be square");
  }
  if (!q.isApprox(q.transpose())) {
    throw ZdpError(ErrorKind::kValidation, "Q must be symmetric");
  }
  Eigen::LLT<MatrixXd> llt(q);
  if (llt.info() != Eigen::Success) {
    throw ZdpError(ErrorKind::kValidation, "Q must be positive definite");
  }
  if (!(r > 0.0)) throw ZdpError(ErrorKind::kValidation, "r must be positive");
}

int IlqrConfig::steps() const {
  return static_cast<int>(std::lround(horizon_seconds / dt));
}

void IlqrConfig::validate() const {
  if (!(horizon_seconds > 0) || !(dt > 0) || max_iters <= 0 || !(cost_tol > 0) ||
      !(regularization >= 0) || line_search_betas.empty() || !(escape_bound > 0)) {
    throw ZdpError(ErrorKind::kValidation, "iLQR settings must be positive");
  }
  const double ratio = horizon_seconds / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-6 * ratio) {
    throw ZdpError(ErrorKind::kValidation, "horizon must be a multiple of dt");
  }
  for (double b : line_search_betas) {
    if (!(b > 0) || b > 1) {
      throw ZdpError(ErrorKind::kValidation, "line search factors must lie in (0, 1]");
    }
  }
}

IlqrSolver::IlqrSolver(NormalFormSystem nf, QuadraticCost cost, IlqrConfig cfg)
    : nf_(std::move(nf)), cost_(std::move(cost)), cfg_(std::move(cfg)) {
  cost_.validate();
  cfg_.validate();
  if (nf_.n() > kMaxStates) {
    throw ZdpError(ErrorKind::kValidation, "iLQR supports at most 8 states");
  }
  if (cost_.q.rows() != nf_.n()) {
    throw ZdpError(ErrorKind::kValidation, "Q dimension does not match the state");
  }
  terminal_ = lqr_gain(linearize_about_origin(nf_), cost_.q, cost_.r);
}

MatrixXd IlqrSolver::state_jacobian(const VectorXd& zeta) const {
  const int n = nf_.n();
  MatrixXd a = MatrixXd::Zero(n, n);
  a.topLeftCorner(nf_.gamma, nf_.gamma) = nf_.f_mat;
  if (nf_.nz > 0) {
    const VectorMap w = [this](const VectorXd& x) { return nf_.omega_at(x); };
    a.bottomRows(nf_.nz) = jacobian_fd(w, zeta, 1e-6);
  }
  return a;
}

template <typename Policy>
IlqrSolver::Rollout IlqrSolver::rollout(const VectorXd& zeta0, Policy&& policy) const {
  const int steps = cfg_.steps();
  const double h = cfg_.dt;
  Rollout out;
  out.states.reserve(steps + 1);
  out.inputs.reserve(steps);
  out.running_integral.reserve(steps + 1);
  out.states.push_back(zeta0);
  out.running_integral.push_back(0.0);
  VectorXd x = zeta0;
  double integral = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double u = policy(k, x);
    const VectorXd k1 = nf_.linearized_rhs(x, u);
    const VectorXd x2 = x + 0.5 * h * k1;
    const VectorXd k2 = nf_.linearized_rhs(x2, u);
    const VectorXd x3 = x + 0.5 * h * k2;
    const VectorXd k3 = nf_.linearized_rhs(x3, u);
    const VectorXd x4 = x + h * k3;
    const VectorXd k4 = nf_.linearized_rhs(x4, u);
    integral += h / 6.0 *
                (cost_.running(x, u) + 2.0 * cost_.running(x2, u) +
                 2.0 * cost_.running(x3, u) + cost_.running(x4, u));
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite() || !std::isfinite(u) || x.norm() > cfg_.escape_bound) {
      return out;
    }
    out.inputs.push_back(u);
    out.states.push_back(x);
    out.running_integral.push_back(integral);
  }
  out.total = integral + x.dot(terminal_.p * x);
  out.ok = std::isfinite(out.total);
  return out;
}

IlqrSolver::Rollout IlqrSolver::rollout_lqr(const VectorXd& zeta0) const {
  const Eigen::RowVectorXd k = terminal_.gain.k;
  return rollout(zeta0, [&](int, const VectorXd& x) { return -k.dot(x); });
}

IlqrSolver::Rollout IlqrSolver::rollout_open_loop(const VectorXd& zeta0,
                                                  const std::vector<double>& u) const {
  return rollout(zeta0, [&](int k, const VectorXd&) { return u[k]; });
}

IlqrSolver::Rollout IlqrSolver::rollout_policy(
    const VectorXd& zeta0, const Rollout& nominal, const std::vector<double>& ff,
    const std::vector<Eigen::RowVectorXd>& gains, double alpha) const {
  return rollout(zeta0, [&](int k, const VectorXd& x) {
    return nominal.inputs[k] + alpha * ff[k] - gains[k].dot(x - nominal.states[k]);
  });
}

void IlqrSolver::backward(const Rollout& nominal, double mu, std::vector<double>& ff,
                          std::vector<Eigen::RowVectorXd>& gains) const {
  // Fixed-capacity storage keeps the per-step Riccati updates off the heap.
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxStates, kMaxStates>;
  using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxStates, 1>;
  const int steps = cfg_.steps();
  const int n = nf_.n();
  const double h = cfg_.dt;
  const double r = cost_.r;
  const double rho = r + mu;
  const Mat q = cost_.q;
  Vec b = Vec::Zero(n);
  b.head(nf_.gamma) = nf_.g_vec;

  std::vector<Mat> a(steps + 1);
  for (int k = 0; k <= steps; ++k) a[k] = state_jacobian(nominal.states[k]);

  ff.assign(steps, 0.0);
  gains.assign(steps, Eigen::RowVectorXd::Zero(n));

  Mat p_mat = terminal_.p;
  Vec p_vec = terminal_.p * nominal.states[steps];

  // Reverse-time derivatives of the quadratic and linear value terms.
  Vec pb(n);
  const auto rhs = [&](const Mat& am, const Vec& xbar, double ubar, const Mat& pm,
                       const Vec& pv, Mat& dpm, Vec& dpv) {
    pb.noalias() = pm * b;
    dpm = q;
    dpm.noalias() += am.transpose() * pm;
    dpm.noalias() += pm * am;
    dpm.noalias() -= (pb / rho) * pb.transpose();
    const double l = -(r * ubar + b.dot(pv)) / rho;
    dpv.noalias() = q * xbar;
    dpv.noalias() += am.transpose() * pv;
    dpv += pb * l;
  };

  Mat d1(n, n), d2(n, n), d3(n, n), d4(n, n), a_mid(n, n), p_tmp(n, n);
  Vec e1(n), e2(n), e3(n), e4(n), x_mid(n), v_tmp(n), x_next(n), x_k(n);
  for (int k = steps - 1; k >= 0; --k) {
    a_mid = 0.5 * (a[k] + a[k + 1]);
    x_next = nominal.states[k + 1];
    x_k = nominal.states[k];
    x_mid = 0.5 * (x_k + x_next);
    const double ubar = nominal.inputs[k];
    rhs(a[k + 1], x_next, ubar, p_mat, p_vec, d1, e1);
    p_tmp = p_mat + 0.5 * h * d1;
    v_tmp = p_vec + 0.5 * h * e1;
    rhs(a_mid, x_mid, ubar, p_tmp, v_tmp, d2, e2);
    p_tmp = p_mat + 0.5 * h * d2;
    v_tmp = p_vec + 0.5 * h * e2;
    rhs(a_mid, x_mid, ubar, p_tmp, v_tmp, d3, e3);
    p_tmp = p_mat + h * d3;
    v_tmp = p_vec + h * e3;
    rhs(a[k], x_k, ubar, p_tmp, v_tmp, d4, e4);
    p_mat += h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
    p_vec += h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
    p_tmp = 0.5 * (p_mat + p_mat.transpose());
    p_mat = p_tmp;
    pb.noalias() = p_mat * b;
    gains[k] = pb.transpose() / rho;
    ff[k] = -(r * ubar + b.dot(p_vec)) / rho;
  }
}

IlqrSolution IlqrSolver::solve(const VectorXd& zeta0,
                               const IlqrSolution* warm_start) const {
  if (zeta0.size() != nf_.n() || !zeta0.allFinite()) {
    throw ZdpError(ErrorKind::kValidation, "initial state must be finite and sized n");
  }
  const int steps = cfg_.steps();

  Rollout current;
  if (warm_start != nullptr && !warm_start->nominal_inputs.empty()) {
    const auto& ws = *warm_start;
    const Eigen::RowVectorXd k_lqr = terminal_.gain.k;
    current = rollout(zeta0, [&](int k, const VectorXd& x) {
      if (k < static_cast<int>(ws.nominal_inputs.size())) {
        return ws.nominal_inputs[k] - ws.feedback_gains[k].dot(x - ws.nominal_states[k]);
      }
      return -k_lqr.dot(x);
    });
  }
  {
    Rollout lqr = rollout_lqr(zeta0);
    if (lqr.ok && (!current.ok || lqr.total < current.total)) current = std::move(lqr);
  }
  if (!current.ok) {
    current = rollout_open_loop(zeta0, std::vector<double>(steps, 0.0));
  }
  if (!current.ok) {
    throw ZdpError(ErrorKind::kDiverged, "no initial rollout stays in the working box");
  }

  IlqrSolution sol;
  sol.dt = cfg_.dt;
  sol.cost_history.push_back(current.total);
  std::vector<double> ff;
  std::vector<Eigen::RowVectorXd> gains;
  double mu = cfg_.regularization;
  double gains_mu = -1.0;

  for (int it = 0; it < cfg_.max_iters; ++it) {
    backward(current, mu, ff, gains);
    gains_mu = mu;
    double ff_max = 0.0;
    double u_max = 0.0;
    for (int k = 0; k < steps; ++k) {
      ff_max = std::max(ff_max, std::abs(ff[k]));
      u_max = std::max(u_max, std::abs(current.inputs[k]));
    }
    if (ff_max <= 1e-12 * (1.0 + u_max)) {
      sol.converged = true;
      break;
    }

    bool accepted = false;
    double rel_decrease = 0.0;
    for (double alpha : cfg_.line_search_betas) {
      Rollout cand = rollout_policy(zeta0, current, ff, gains, alpha);
      if (cand.ok && cand.total < current.total) {
        rel_decrease = (current.total - cand.total) / std::max(current.total, 1e-300);
        current = std::move(cand);
        accepted = true;
        break;
      }
    }
    sol.iterations = it + 1;
    if (accepted) {
      sol.cost_history.push_back(current.total);
      mu = mu / 10.0;
      if (mu < 1e-10) mu = 0.0;
      if (rel_decrease < cfg_.cost_tol) {
        sol.converged = true;
        break;
      }
    } else {
      mu = std::max(mu * 10.0, 1e-6);
      if (mu > 1e8) {
        // No descent direction left at any damping level.
        sol.converged = true;
        break;
      }
    }
  }

  if (gains_mu != 0.0 || sol.cost_history.size() > 1) {
    backward(current, 0.0, ff, gains);
  }
  sol.nominal_states = std::move(current.states);
  sol.nominal_inputs = std::move(current.inputs);
  sol.feedback_gains = std::move(gains);
  sol.cost = current.total;
  sol.cost_to_go.resize(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    sol.cost_to_go[k] = current.total - current.running_integral[k];
  }
  return sol;
}

OptimalControl IlqrSolver::query(const VectorXd& zeta0) const {
  const IlqrSolution sol = solve(zeta0);
  return OptimalControl{sol.nominal_inputs.front(), -sol.feedback_gains.front()};
}

IlqrSolution ilqr_solve(const NormalFormSystem& nf, const QuadraticCost& cost,
                        const NzState& zeta0, const IlqrConfig& cfg) {
  return IlqrSolver(nf, cost, cfg).solve(zeta0.stacked());
}

OptimalControl optimal_control_query(const NormalFormSystem& nf,
                                     const QuadraticCost& cost,
                                     const NzState& zeta, const IlqrConfig& cfg) {
  return IlqrSolver(nf, cost, cfg).query(zeta.stacked());
}

ValueDecreaseReport value_decrease_check(const IlqrSolver& solver,
                                         const IlqrSolution& sol, double slack) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(solver.cost().q);
  const double lambda_min = es.eigenvalues().minCoeff();
  const int steps = static_cast<int>(sol.nominal_inputs.size());
  const double h = sol.dt;
  ValueDecreaseReport rep;
  for (int k = 0; k <= steps; ++k) {
    double vdot;
    if (k == 0) {
      vdot = (sol.cost_to_go[1] - sol.cost_to_go[0]) / h;
    } else if (k == steps) {
      vdot = (sol.cost_to_go[k] - sol.cost_to_go[k - 1]) / h;
    } else {
      vdot = (sol.cost_to_go[k + 1] - sol.cost_to_go[k - 1]) / (2.0 * h);
    }
    // The terminal sample has no running cost left to differentiate.
    if (k == steps) break;
    const double bound = -lambda_min * sol.nominal_states[k].squaredNorm();
    rep.times.push_back(k * h);
    rep.vdot.push_back(vdot);
    rep.bound.push_back(bound);
    if (bound < 0.0) {
      const double ratio = vdot / bound;
      rep.worst_ratio = k == 0 ? ratio : std::min(rep.worst_ratio, ratio);
      if (ratio < 1.0 - slack) rep.holds = false;
    } else if (vdot > 1e-12) {
      rep.holds = false;
    }
  }
  return rep;
}

ValueDecreaseReport value_decrease_check(const NormalFormSystem& nf,
                                         const QuadraticCost& cost,
                                         const NzState& zeta0, const IlqrConfig& cfg,
                                         double slack) {
  const IlqrSolver solver(nf, cost, cfg);
  return value_decrease_check(solver, solver.solve(zeta0.stacked()), slack);
}

Trajectory optimal_closed_loop(const IlqrSolver& solver, const VectorXd& zeta0,
                               double t_final, double replan_interval) {
  const auto& cfg = solver.config();
  const auto& nf = solver.system();
  const double h = cfg.dt;
  const int total = static_cast<int>(std::lround(t_final / h));
  const int every = std::max(1, static_cast<int>(std::lround(replan_interval / h)));

  Trajectory traj;
  traj.controller = "ilqr";
  VectorXd x = zeta0;
  IlqrSolution plan;
  int offset = 0;
  for (int k = 0; k <= total; ++k) {
    traj.times.push_back(k * h);
    traj.states.push_back(x);
    StepDiagnostics diag;
    diag.z_norm = x.tail(nf.nz).norm();
    traj.aux.push_back(diag);
    if (k == total) break;
    if (k % every == 0) {
      IlqrSolution shifted;
      const IlqrSolution* warm = nullptr;
      if (!plan.nominal_inputs.empty()) {
        const int m = std::min<int>(offset, plan.nominal_inputs.size());
        shifted.nominal_states.assign(plan.nominal_states.begin() + m, plan.nominal_states.end());
        shifted.nominal_inputs.assign(plan.nominal_inputs.begin() + m, plan.nominal_inputs.end());
        shifted.feedback_gains.assign(plan.feedback_gains.begin() + m, plan.feedback_gains.end());
        warm = &shifted;
      }
      plan = solver.solve(x, warm);
      offset = 0;
    }
    const double u = plan.nominal_inputs[offset] -
                     plan.feedback_gains[offset].dot(x - plan.nominal_states[offset]);
    ++offset;
    traj.inputs.push_back(u);
    const VectorXd k1 = nf.linearized_rhs(x, u);
    const VectorXd k2 = nf.linearized_rhs(x + 0.5 * h * k1, u);
    const VectorXd k3 = nf.linearized_rhs(x + 0.5 * h * k2, u);
    const VectorXd k4 = nf.linearized_rhs(x + h * k3, u);
    x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite() || x.norm() > cfg.escape_bound) {
      traj.escaped = true;
      break;
    }
  }
  return traj;
}

}  // namespace zdp
