#include "zdp/linear_zdp.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>

#include <Eigen/SVD>

#include "zdp/errors.hpp"

namespace zdp {

namespace {

double smallest_singular_value(const MatrixXd& m) {
  if (m.cols() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return svd.singularValues().minCoeff();
}

}  // namespace

InvariantSubspace select_invariant_subspace(const MatrixXd& a_cl, int gamma,
                                            int nz, SubspacePreference preference) {
  const int n = gamma + nz;
  if (a_cl.rows() != n || a_cl.cols() != n) {
    throw ZdpError(ErrorKind::kValidation, "A_cl shape does not match gamma + nz");
  }
  const EigenPairs eig = eig_decompose(a_cl);
  std::vector<double> lambda(n);
  MatrixXd vecs(n, n);
  for (int i = 0; i < n; ++i) {
    const auto value = eig.values(i);
    if (std::abs(value.imag()) > 1e-9 * std::max(1.0, std::abs(value))) {
      throw ZdpError(ErrorKind::kValidation,
                     "closed loop has complex eigenvalues; choose real poles");
    }
    lambda[i] = value.real();
    // A real eigenvalue's eigenvector is real up to a complex phase; rotate
    // by the phase of its largest entry.
    Eigen::VectorXcd v = eig.vectors.col(i);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    v *= std::conj(v(imax)) / std::abs(v(imax));
    vecs.col(i) = v.real().normalized();
  }
  for (int i = 1; i < n; ++i) {
    if (std::abs(lambda[i] - lambda[i - 1]) <= 1e-9 * std::max(1.0, std::abs(lambda[i]))) {
      throw ZdpError(ErrorKind::kValidation, "closed-loop eigenvalues must be distinct");
    }
  }

  std::vector<int> chosen;
  if (preference == SubspacePreference::kSlowest) {
    for (int i = n - 1; i >= n - nz; --i) chosen.push_back(i);
  } else {
    std::vector<bool> used(n, false);
    for (int step = 0; step < nz; ++step) {
      int best = -1;
      double best_sv = -1.0;
      for (int cand = 0; cand < n; ++cand) {
        if (used[cand]) continue;
        MatrixXd proj(nz, step + 1);
        for (int c = 0; c < step; ++c) proj.col(c) = vecs.col(chosen[c]).tail(nz);
        proj.col(step) = vecs.col(cand).tail(nz);
        const double sv = smallest_singular_value(proj);
        if (sv > best_sv + 1e-12) {
          best_sv = sv;
          best = cand;
        }
      }
      used[best] = true;
      chosen.push_back(best);
    }
  }
  std::sort(chosen.begin(), chosen.end());

  MatrixXd v(n, nz);
  for (int c = 0; c < nz; ++c) v.col(c) = vecs.col(chosen[c]);
  const MatrixXd vz = v.bottomRows(nz);
  if (nz > 0 && smallest_singular_value(vz) < 1e-8) {
    throw ZdpError(ErrorKind::kDegenerateProjection,
                   "chosen eigenvectors do not span the z coordinates");
  }

  InvariantSubspace sub;
  Eigen::FullPivLU<MatrixXd> lu(vz);
  sub.s = v * lu.inverse();
  sub.s.bottomRows(nz).setIdentity();
  sub.s_eta = sub.s.topRows(gamma).transpose();
  VectorXd diag(nz);
  for (int c = 0; c < nz; ++c) {
    diag(c) = lambda[chosen[c]];
    sub.chosen_eigenvalues.push_back(lambda[chosen[c]]);
  }
  sub.j = vz * diag.asDiagonal() * lu.inverse();
  return sub;
}

LinearZdp build_linear_zdp(const InvariantSubspace& sub, const LinearModel& model,
                           const GainMatrix& k) {
  const int n = model.n();
  const int gamma = model.gamma;
  const int nz = n - gamma;
  if (gamma < 1 || sub.s_eta.cols() != gamma || sub.s_eta.rows() != nz) {
    throw ZdpError(ErrorKind::kValidation, "subspace does not match the model");
  }
  LinearZdp zdp;
  zdp.k = k;
  zdp.s_eta1 = sub.s_eta.col(0);
  zdp.c = Eigen::RowVectorXd::Zero(n);
  zdp.c(0) = 1.0;
  zdp.c.tail(nz) = -zdp.s_eta1.transpose();
  zdp.p = gamma >= 2 ? 1.0 - zdp.s_eta1.dot(model.a_eta2) : 1.0;
  if (!(std::abs(zdp.p) >= 1e-8)) {
    throw ZdpError(ErrorKind::kRelativeDegreeLoss,
                   "1 - s_eta1^T a_eta2 vanishes; output loses relative degree");
  }
  return zdp;
}

EMatrixReport build_e_matrix(const LinearZdp& zdp, const LinearModel& model,
                             const MatrixXd& a_cl, int gamma) {
  const int n = static_cast<int>(a_cl.rows());
  const int nz = n - gamma;
  EMatrixReport rep;
  rep.p = zdp.p;
  rep.e.resize(gamma, n);
  rep.ladder.resize(gamma);
  Eigen::RowVectorXd row = zdp.c;
  for (int i = 0; i < gamma; ++i) {
    rep.e.row(i) = row;
    rep.ladder(i) = row.dot(model.b);
    row = row * a_cl;
  }

  const Eigen::RowVectorXd s_t = zdp.s_eta1.transpose();
  MatrixXd az_pow = MatrixXd::Identity(nz, nz);
  for (int k = 0; k < gamma; ++k) {
    const Eigen::RowVectorXd o = -s_t * az_pow;
    rep.o_k.push_back(o);
    if (k <= gamma - 2 && model.a_eta1.size() == nz) rep.m_k.push_back(o * model.a_eta1);
    if (k <= gamma - 3 && model.a_eta2.size() == nz) {
      rep.q_k.push_back(o * (model.a_eta1 + model.a_z * model.a_eta2));
    }
    az_pow = az_pow * model.a_z;
  }
  return rep;
}

double check_relative_degree_nonlinear(
    const NormalFormSystem& nf,
    const std::function<VectorXd(const VectorXd&)>& psi1_grad,
    const NzState& zeta) {
  if (nf.gamma < 2) return 1.0;
  const double h = 1e-6;
  NzState plus = zeta;
  NzState minus = zeta;
  plus.eta(1) += h;
  minus.eta(1) -= h;
  const VectorXd dw = (nf.omega(plus) - nf.omega(minus)) / (2.0 * h);
  return 1.0 - psi1_grad(zeta.z).dot(dw);
}

VectorXd psi_lin_eval(const InvariantSubspace& sub, const VectorXd& z) {
  return sub.s_eta.transpose() * z;
}

}  // namespace zdp
