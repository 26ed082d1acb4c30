#include "zdp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "zdp/errors.hpp"

namespace zdp {

LinearModel LinearModel::plain(const MatrixXd& a, const VectorXd& b) {
  LinearModel m;
  m.a = a;
  m.b = b;
  return m;
}

MatrixXd jacobian_fd(const VectorMap& f, const VectorXd& x0, double step) {
  const auto n = x0.size();
  VectorXd x = x0;
  MatrixXd jac;
  for (Eigen::Index j = 0; j < n; ++j) {
    x(j) = x0(j) + step;
    const VectorXd fp = f(x);
    x(j) = x0(j) - step;
    const VectorXd fm = f(x);
    x(j) = x0(j);
    if (!fp.allFinite() || !fm.allFinite()) {
      throw ZdpError(ErrorKind::kNonFinite, "non-finite value in Jacobian stencil");
    }
    if (j == 0) jac.resize(fp.size(), n);
    jac.col(j) = (fp - fm) / (2.0 * step);
  }
  if (n == 0) {
    jac.resize(f(x0).size(), 0);
  }
  return jac;
}

LinearModel linearize_about_origin(const NormalFormSystem& nf, double step) {
  const int n = nf.n();
  const int gamma = nf.gamma;
  const VectorMap w = [&nf](const VectorXd& zeta) { return nf.omega_at(zeta); };
  const MatrixXd dw = jacobian_fd(w, VectorXd::Zero(n), step);

  LinearModel m;
  m.gamma = gamma;
  m.a = MatrixXd::Zero(n, n);
  m.a.topLeftCorner(gamma, gamma) = nf.f_mat;
  m.a.bottomRows(nf.nz) = dw;
  m.b = VectorXd::Zero(n);
  m.b.head(gamma) = nf.g_vec;
  if (gamma >= 1) m.a_eta1 = dw.col(0);
  if (gamma >= 2) m.a_eta2 = dw.col(1);
  m.a_z = dw.rightCols(nf.nz);
  return m;
}

LinearModel linearize_system(const ControlAffineSystem& sys, double step) {
  const VectorXd origin = VectorXd::Zero(sys.n);
  return LinearModel::plain(jacobian_fd(sys.drift, origin, step),
                            sys.actuation(origin));
}

EigenPairs eig_decompose(const MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw ZdpError(ErrorKind::kValidation, "eig_decompose needs a square matrix");
  }
  Eigen::EigenSolver<MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) {
    throw ZdpError(ErrorKind::kNoConvergence, "eigenvalue iteration failed");
  }
  const Eigen::VectorXcd values = solver.eigenvalues();
  const Eigen::MatrixXcd vectors = solver.eigenvectors();
  std::vector<Eigen::Index> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) {
    if (values(i).real() != values(j).real()) {
      return values(i).real() < values(j).real();
    }
    return values(i).imag() < values(j).imag();
  });
  EigenPairs out{Eigen::VectorXcd(values.size()),
                 Eigen::MatrixXcd(vectors.rows(), vectors.cols())};
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.values(k) = values(order[k]);
    out.vectors.col(k) = vectors.col(order[k]);
  }
  return out;
}

MatrixXd controllability_matrix(const LinearModel& model) {
  const int n = model.n();
  MatrixXd c(n, n);
  VectorXd col = model.b;
  for (int i = 0; i < n; ++i) {
    c.col(i) = col;
    col = model.a * col;
  }
  return c;
}

int matrix_rank(const MatrixXd& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > rel_tol * sv(0)) ++rank;
  }
  return rank;
}

bool is_hurwitz(const MatrixXd& m) {
  if (m.size() == 0) return true;
  Eigen::EigenSolver<MatrixXd> solver(m, false);
  return solver.info() == Eigen::Success &&
         (solver.eigenvalues().real().array() < 0.0).all();
}

namespace {

Eigen::RowVectorXd ackermann(const MatrixXd& a, const VectorXd& b,
                             const std::vector<double>& poles) {
  const auto n = a.rows();
  MatrixXd ctrb(n, n);
  VectorXd col = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    ctrb.col(i) = col;
    col = a * col;
  }
  // phi(A) = prod (A - p_i I)
  MatrixXd phi = MatrixXd::Identity(n, n);
  for (double p : poles) phi = phi * (a - p * MatrixXd::Identity(n, n));
  Eigen::RowVectorXd last = Eigen::RowVectorXd::Zero(n);
  last(n - 1) = 1.0;
  const Eigen::RowVectorXd sel =
      ctrb.transpose().fullPivLu().solve(last.transpose()).transpose();
  return sel * phi;
}

struct ControllableSplit {
  int rank = 0;
  MatrixXd basis;  // orthogonal, first `rank` columns span the reachable space
  MatrixXd a_hat;
  VectorXd b_hat;
};

ControllableSplit split_controllable(const LinearModel& model) {
  ControllableSplit out;
  const MatrixXd ctrb = controllability_matrix(model);
  Eigen::JacobiSVD<MatrixXd> svd(ctrb, Eigen::ComputeFullU);
  out.rank = matrix_rank(ctrb);
  out.basis = svd.matrixU();
  out.a_hat = out.basis.transpose() * model.a * out.basis;
  out.b_hat = out.basis.transpose() * model.b;
  return out;
}

}  // namespace

GainMatrix place_poles(const LinearModel& model, const std::vector<double>& poles) {
  const int n = model.n();
  if (static_cast<int>(poles.size()) != n) {
    throw ZdpError(ErrorKind::kBadPoles, "need exactly one pole per state");
  }
  for (std::size_t i = 0; i < poles.size(); ++i) {
    if (!(poles[i] < 0.0) || !std::isfinite(poles[i])) {
      throw ZdpError(ErrorKind::kBadPoles, "poles must be negative reals");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(poles[i] - poles[j]) <= 1e-9 * std::max(1.0, std::abs(poles[i]))) {
        throw ZdpError(ErrorKind::kBadPoles, "poles must be distinct");
      }
    }
  }

  const ControllableSplit split = split_controllable(model);
  if (split.rank == n) {
    return GainMatrix{ackermann(model.a, model.b, poles)};
  }

  // Unreachable modes cannot move; accept them only if they are already among
  // the requested poles, and place the rest on the reachable block.
  const int r = split.rank;
  const MatrixXd a_u = split.a_hat.bottomRightCorner(n - r, n - r);
  const EigenPairs fixed = eig_decompose(a_u);
  std::vector<double> remaining = poles;
  for (Eigen::Index i = 0; i < fixed.values.size(); ++i) {
    const auto lambda = fixed.values(i);
    const auto it = std::find_if(remaining.begin(), remaining.end(), [&](double p) {
      return std::abs(lambda - std::complex<double>(p, 0.0)) <
             1e-6 * std::max(1.0, std::abs(p));
    });
    if (it == remaining.end()) {
      throw ZdpError(ErrorKind::kUncontrollable,
                     "controllability rank " + std::to_string(r) + " < " +
                         std::to_string(n));
    }
    remaining.erase(it);
  }
  Eigen::RowVectorXd k_hat = Eigen::RowVectorXd::Zero(n);
  if (r > 0) {
    k_hat.head(r) = ackermann(split.a_hat.topLeftCorner(r, r),
                              split.b_hat.head(r), remaining);
  }
  return GainMatrix{k_hat * split.basis.transpose()};
}

MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& q) {
  const auto n = a.rows();
  const MatrixXd eye = MatrixXd::Identity(n, n);
  MatrixXd kron(n * n, n * n);
  // vec(A^T X + X A) = (I (x) A^T + A^T (x) I) vec(X), column-major vec.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n) =
          eye(i, j) * a.transpose() + a(j, i) * eye;
    }
  }
  const VectorXd rhs = -Eigen::Map<const VectorXd>(q.data(), n * n);
  const VectorXd sol = kron.fullPivLu().solve(rhs);
  MatrixXd x = Eigen::Map<const MatrixXd>(sol.data(), n, n);
  return 0.5 * (x + x.transpose());
}

double riccati_residual(const LinearModel& model, const MatrixXd& q, double r,
                        const MatrixXd& p) {
  const MatrixXd& a = model.a;
  const MatrixXd pb = p * model.b;
  return (a.transpose() * p + p * a - pb * pb.transpose() / r + q).norm();
}

LqrSolution lqr_gain(const LinearModel& model, const MatrixXd& q, double r) {
  const int n = model.n();
  if (!(r > 0.0)) throw ZdpError(ErrorKind::kValidation, "r must be positive");
  if (q.rows() != n || q.cols() != n) {
    throw ZdpError(ErrorKind::kValidation, "Q shape mismatch");
  }
  Eigen::LLT<MatrixXd> llt(0.5 * (q + q.transpose()));
  if (llt.info() != Eigen::Success) {
    throw ZdpError(ErrorKind::kValidation, "Q must be positive definite");
  }

  // Stabilizing seed for the Newton-Kleinman iteration.
  Eigen::RowVectorXd k = Eigen::RowVectorXd::Zero(n);
  if (!is_hurwitz(model.a)) {
    const ControllableSplit split = split_controllable(model);
    const int rank = split.rank;
    if (rank < n && !is_hurwitz(split.a_hat.bottomRightCorner(n - rank, n - rank))) {
      throw ZdpError(ErrorKind::kNoStabilizingSolution, "system not stabilizable");
    }
    Eigen::EigenSolver<MatrixXd> es(model.a, false);
    const double scale = 1.0 + es.eigenvalues().cwiseAbs().maxCoeff();
    std::vector<double> seed;
    for (int i = 0; i < rank; ++i) seed.push_back(-scale * (1.0 + 0.5 * i));
    Eigen::RowVectorXd k_hat = Eigen::RowVectorXd::Zero(n);
    if (rank > 0) {
      k_hat.head(rank) = ackermann(split.a_hat.topLeftCorner(rank, rank),
                                   split.b_hat.head(rank), seed);
    }
    k = k_hat * split.basis.transpose();
  }

  LqrSolution sol;
  MatrixXd p;
  for (int it = 0; it < 100; ++it) {
    const MatrixXd a_cl = model.a - model.b * k;
    p = solve_lyapunov(a_cl, q + r * k.transpose() * k);
    const Eigen::RowVectorXd k_next = model.b.transpose() * p / r;
    const double change = (k_next - k).norm();
    k = k_next;
    sol.iterations = it + 1;
    if (!p.allFinite()) break;
    if (change <= 1e-14 * (1.0 + k.norm())) break;
  }
  if (!p.allFinite() || !is_hurwitz(model.a - model.b * k)) {
    throw ZdpError(ErrorKind::kNoStabilizingSolution,
                   "Newton-Kleinman iteration did not reach a stabilizing solution");
  }
  sol.p = p;
  sol.gain.k = k;
  return sol;
}

}  // namespace zdp
