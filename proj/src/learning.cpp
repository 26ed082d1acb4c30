#include "zdp/learning.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <spdlog/spdlog.h>

#include "zdp/errors.hpp"
#include "zdp/parallel.hpp"

namespace zdp {

std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::kSgd: return "sgd";
    case Optimizer::kMomentum: return "momentum";
    case Optimizer::kAdam: return "adam";
  }
  return "unknown";
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::kSgd;
  if (s == "momentum") return Optimizer::kMomentum;
  if (s == "adam") return Optimizer::kAdam;
  throw ZdpError(ErrorKind::kValidation, "unknown optimizer '" + s + "'");
}

void TrainConfig::validate() const {
  if (batch_size <= 0 || steps < 0 || pretrain_steps < 0 || pretrain_batch <= 0) {
    throw ZdpError(ErrorKind::kValidation, "training counts must be positive");
  }
  if (!(learning_rate >= 0.0) || !(pretrain_learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ZdpError(ErrorKind::kValidation, "learning rates must be finite and non-negative");
  }
  if (box_lo.size() == 0 || box_lo.size() != box_hi.size()) {
    throw ZdpError(ErrorKind::kValidation, "sample box bounds missing or mismatched");
  }
  if (!box_lo.allFinite() || !box_hi.allFinite() || (box_hi - box_lo).minCoeff() < 0.0) {
    throw ZdpError(ErrorKind::kValidation, "sample box must satisfy lo <= hi");
  }
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    throw ZdpError(ErrorKind::kValidation, "final_lr_fraction must lie in [0, 1]");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ZdpError(ErrorKind::kValidation, "momentum must lie in [0, 1)");
  }
  if (jobs <= 0) throw ZdpError(ErrorKind::kValidation, "jobs must be positive");
}

OptimalPolicy ilqr_policy(const IlqrSolver& solver) {
  const IlqrSolver* s = &solver;
  return [s](const VectorXd& zeta) { return s->query(zeta); };
}

namespace {

VectorXd stack(const VectorXd& eta, const VectorXd& z) {
  VectorXd zeta(eta.size() + z.size());
  zeta << eta, z;
  return zeta;
}

bool skippable(const ZdpError& e) {
  switch (e.kind()) {
    case ErrorKind::kDiverged:
    case ErrorKind::kNonFinite:
    case ErrorKind::kNoConvergence:
    case ErrorKind::kSingularDecoupling:
      return true;
    default:
      return false;
  }
}

LossReport summarize(const std::vector<double>& norms, const std::vector<char>& ok) {
  LossReport report;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (!ok[i]) {
      ++report.skipped;
      continue;
    }
    report.residuals.push_back(norms[i]);
    sum += norms[i];
    sum_sq += norms[i] * norms[i];
    report.max_residual = std::max(report.max_residual, norms[i]);
  }
  if (!report.residuals.empty()) {
    const double count = static_cast<double>(report.residuals.size());
    report.mean_residual = sum / count;
    report.mean_squared = sum_sq / count;
  }
  return report;
}

// Residual in its feedback-linearized form F psi + G u - J omega, which equals
// fhat + ghat v for the physical input v realizing u.
struct SampleEval {
  VectorXd residual;
  VectorXd omega;
  VectorXd zeta;
  OptimalControl oc;
};

SampleEval evaluate_sample(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                           const OptimalPolicy& u_star, const VectorXd& z) {
  SampleEval s;
  const VectorXd eta = psi.eval(z);
  s.zeta = stack(eta, z);
  s.oc = u_star(s.zeta);
  s.omega = nf.omega_at(s.zeta);
  s.residual = invariance_residual(nf, psi, s.oc.u_star, z);
  if (!s.residual.allFinite()) {
    throw ZdpError(ErrorKind::kNonFinite, "non-finite invariance residual");
  }
  return s;
}

}  // namespace

VectorXd invariance_residual(const NormalFormSystem& nf,
                             const ZeroDynamicsPolicy& psi, double u_star,
                             const VectorXd& z) {
  NzState zeta{psi.eval(z), z};
  const double v = feedback_linearize(nf, zeta, u_star);
  return nf.fhat(zeta) + nf.ghat(zeta) * v - psi.jacobian(z) * nf.omega(zeta);
}

LossReport loss_batch(const NormalFormSystem& nf, const ZeroDynamicsPolicy& psi,
                      const OptimalPolicy& u_star,
                      const std::vector<VectorXd>& z_samples, int jobs) {
  std::vector<double> norms(z_samples.size(), 0.0);
  std::vector<char> ok(z_samples.size(), 1);
  parallel_for(z_samples.size(), jobs, [&](std::size_t i) {
    try {
      norms[i] = evaluate_sample(nf, psi, u_star, z_samples[i]).residual.norm();
    } catch (const ZdpError& e) {
      if (!skippable(e)) throw;
      ok[i] = 0;
    }
  });
  return summarize(norms, ok);
}

LossReport loss_batch(const NormalFormSystem& nf, const MlpParams& params,
                      const QuadraticCost& cost, const IlqrConfig& cfg,
                      const std::vector<VectorXd>& z_samples, int jobs) {
  const IlqrSolver solver(nf, cost, cfg);
  return loss_batch(nf, MlpPolicy(params), ilqr_policy(solver), z_samples, jobs);
}

LossGradient loss_gradient(const NormalFormSystem& nf, const MlpParams& params,
                           const OptimalPolicy& u_star,
                           const std::vector<VectorXd>& z_samples, int jobs,
                           bool freeze_u_star) {
  const MlpPolicy psi(params);
  const std::size_t count = z_samples.size();
  std::vector<double> norms(count, 0.0);
  std::vector<char> ok(count, 1);
  std::vector<VectorXd> grads(count);
  const int gamma = nf.gamma;
  parallel_for(count, jobs, [&](std::size_t i) {
    const VectorXd& z = z_samples[i];
    try {
      const SampleEval s = evaluate_sample(nf, psi, u_star, z);
      norms[i] = s.residual.norm();
      // d residual / d eta at fixed z, with the network Jacobian held fixed.
      const MatrixXd jac = psi.jacobian(z);
      const MatrixXd domega_deta = jacobian_fd(
          [&](const VectorXd& eta) { return nf.omega_at(stack(eta, z)); },
          s.zeta.head(gamma));
      MatrixXd m = nf.f_mat - jac * domega_deta;
      if (!freeze_u_star) {
        m += nf.g_vec * s.oc.du_dzeta.head(gamma);
      }
      const VectorXd value_adjoint = 2.0 * m.transpose() * s.residual;
      const VectorXd tangent_adjoint = -2.0 * s.residual;
      grads[i] = mlp_dual_backprop(params, z, s.omega, value_adjoint, tangent_adjoint).params;
    } catch (const ZdpError& e) {
      if (!skippable(e)) throw;
      ok[i] = 0;
    }
  });
  LossGradient out;
  out.report = summarize(norms, ok);
  out.grad = VectorXd::Zero(static_cast<Eigen::Index>(params.parameter_count()));
  const std::size_t used = out.report.residuals.size();
  if (used == 0) return out;
  for (std::size_t i = 0; i < count; ++i) {
    if (ok[i]) out.grad += grads[i];
  }
  out.grad /= static_cast<double>(used);
  return out;
}

LossGradient loss_gradient(const NormalFormSystem& nf, const MlpParams& params,
                           const QuadraticCost& cost, const IlqrConfig& cfg,
                           const std::vector<VectorXd>& z_samples, int jobs) {
  const IlqrSolver solver(nf, cost, cfg);
  return loss_gradient(nf, params, ilqr_policy(solver), z_samples, jobs);
}

namespace {

std::vector<VectorXd> draw(std::mt19937_64& rng, const VectorXd& lo, const VectorXd& hi,
                           int count) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<VectorXd> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    VectorXd z(lo.size());
    for (Eigen::Index j = 0; j < lo.size(); ++j) {
      z(j) = lo(j) + (hi(j) - lo(j)) * unit(rng);
    }
    out.push_back(z);
  }
  return out;
}

class Stepper {
 public:
  Stepper(Optimizer kind, double lr, double momentum, Eigen::Index size)
      : kind_(kind), lr_(lr), momentum_(momentum),
        m_(VectorXd::Zero(size)), v_(VectorXd::Zero(size)) {}

  void set_learning_rate(double lr) { lr_ = lr; }

  VectorXd step(const VectorXd& theta, const VectorXd& grad) {
    ++t_;
    switch (kind_) {
      case Optimizer::kSgd:
        return theta - lr_ * grad;
      case Optimizer::kMomentum:
        m_ = momentum_ * m_ + grad;
        return theta - lr_ * m_;
      case Optimizer::kAdam: {
        constexpr double kBeta1 = 0.9;
        constexpr double kBeta2 = 0.999;
        constexpr double kEps = 1e-8;
        m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
        v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        const VectorXd denom = (v_ / c2).cwiseSqrt().array() + kEps;
        return theta - lr_ * ((m_ / c1).array() / denom.array()).matrix();
      }
    }
    return theta;
  }

 private:
  Optimizer kind_;
  double lr_;
  double momentum_;
  VectorXd m_;
  VectorXd v_;
  int t_ = 0;
};

// Shifts the output bias so that psi(0) = 0: the Euclidean projection onto
// the parameters whose manifold contains the equilibrium, taken in the bias
// coordinates only.
void anchor_at_origin(MlpParams& params) {
  params.biases.back() -= mlp_forward(params, VectorXd::Zero(params.input_dim()));
}

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint64_t kHeldOutSalt = 0x9e3779b97f4a7c15ULL;

double fit_mse(const MlpParams& params, const MatrixXd& target,
               const std::vector<VectorXd>& zs) {
  double sum = 0.0;
  for (const auto& z : zs) sum += (mlp_forward(params, z) - target * z).squaredNorm();
  return zs.empty() ? 0.0 : sum / static_cast<double>(zs.size());
}

}  // namespace

std::vector<VectorXd> sample_box(const VectorXd& lo, const VectorXd& hi, int count,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return draw(rng, lo, hi, count);
}

PretrainResult pretrain(const MlpParams& params, const MatrixXd& target,
                        const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  if (target.rows() != params.output_dim() || target.cols() != params.input_dim()) {
    throw ZdpError(ErrorKind::kValidation, "pretraining target has the wrong shape");
  }
  PretrainResult out;
  out.params = params;
  // The skip term represents a linear target exactly; the hidden layers then
  // only need to stay near zero.
  if (out.params.has_skip()) out.params.skip = target;

  const auto held_out = sample_box(cfg.box_lo, cfg.box_hi, 256, cfg.seed ^ kHeldOutSalt);
  const double stop = 0.25 * cfg.pretrain_tol;
  std::mt19937_64 rng(cfg.seed);
  Stepper stepper(Optimizer::kAdam, cfg.pretrain_learning_rate, cfg.momentum,
                  static_cast<Eigen::Index>(params.parameter_count()));
  VectorXd theta = out.params.flatten();
  out.mse = fit_mse(out.params, target, held_out);
  for (int step = 0; step < cfg.pretrain_steps && out.mse >= stop; ++step) {
    const auto batch = draw(rng, cfg.box_lo, cfg.box_hi, cfg.pretrain_batch);
    VectorXd grad = VectorXd::Zero(theta.size());
    for (const auto& z : batch) {
      const VectorXd err = mlp_forward(out.params, z) - target * z;
      grad += mlp_dual_backprop(out.params, z, VectorXd::Zero(z.size()), 2.0 * err,
                                VectorXd::Zero(err.size()))
                  .params;
    }
    grad /= static_cast<double>(batch.size());
    theta = stepper.step(theta, grad);
    out.params = out.params.with_values(theta);
    out.steps = step + 1;
    if ((step + 1) % 50 == 0) {
      out.mse = fit_mse(out.params, target, held_out);
      spdlog::debug("pretrain step {} held-out mse {:.3e}", step + 1, out.mse);
    }
  }
  out.mse = fit_mse(out.params, target, held_out);
  spdlog::info("pretraining finished after {} steps, held-out mse {:.3e}", out.steps,
               out.mse);
  return out;
}

TrainResult train(const NormalFormSystem& nf, const MlpParams& params,
                  const OptimalPolicy& u_star, const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  if (cfg.box_lo.size() != nf.nz || params.input_dim() != nf.nz ||
      params.output_dim() != nf.gamma) {
    throw ZdpError(ErrorKind::kValidation, "network or sample box does not match the system");
  }
  TrainResult out;
  out.params = params;
  const auto held_out =
      sample_box(cfg.box_lo, cfg.box_hi, std::max(64, cfg.batch_size), cfg.seed ^ kHeldOutSalt);
  out.initial_loss =
      loss_batch(nf, MlpPolicy(params), u_star, held_out, cfg.jobs).mean_residual;

  std::mt19937_64 rng(cfg.seed);
  Stepper stepper(cfg.optimizer, cfg.learning_rate, cfg.momentum,
                  static_cast<Eigen::Index>(params.parameter_count()));
  VectorXd theta = params.flatten();
  double smoothed = out.initial_loss;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = draw(rng, cfg.box_lo, cfg.box_hi, cfg.batch_size);
    const LossGradient g = loss_gradient(nf, out.params, u_star, batch, cfg.jobs);
    out.history.push_back({step, g.report.mean_residual, g.report.max_residual});
    smoothed = 0.9 * smoothed + 0.1 * g.report.mean_residual;
    if (!g.grad.allFinite() || !std::isfinite(g.report.mean_residual) ||
        smoothed > 10.0 * std::max(out.initial_loss, 1e-12)) {
      throw ZdpError(ErrorKind::kTrainingDiverged,
                     "invariance loss grew past ten times its initial value at step " +
                         std::to_string(step));
    }
    if (cfg.learning_rate > 0.0) {
      const double progress = cfg.steps > 1 ? static_cast<double>(step) / (cfg.steps - 1) : 0.0;
      const double floor = cfg.final_lr_fraction;
      stepper.set_learning_rate(cfg.learning_rate *
                                (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(kPi * progress))));
      theta = stepper.step(theta, g.grad);
      out.params = out.params.with_values(theta);
      if (cfg.anchor_origin) {
        anchor_at_origin(out.params);
        theta = out.params.flatten();
      }
    }
    if ((step + 1) % 50 == 0) {
      spdlog::info("train step {} batch mean residual {:.4e} (smoothed {:.4e})", step + 1,
                   g.report.mean_residual, smoothed);
    }
  }
  out.final_loss =
      loss_batch(nf, MlpPolicy(out.params), u_star, held_out, cfg.jobs).mean_residual;
  return out;
}

TrainResult train(const NormalFormSystem& nf, const MlpParams& params,
                  const QuadraticCost& cost, const TrainConfig& train_cfg,
                  const IlqrConfig& ilqr_cfg) {
  const IlqrSolver solver(nf, cost, ilqr_cfg);
  return train(nf, params, ilqr_policy(solver), train_cfg);
}

double smoothed_tail(const std::vector<HistoryEntry>& history, int window) {
  if (history.empty()) return 0.0;
  const std::size_t w =
      std::min<std::size_t>(history.size(), static_cast<std::size_t>(std::max(1, window)));
  double sum = 0.0;
  for (std::size_t i = history.size() - w; i < history.size(); ++i) {
    sum += history[i].mean_residual;
  }
  return sum / static_cast<double>(w);
}

}  // namespace zdp
