#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "zdp/dynamics.hpp"
#include "zdp/linalg.hpp"

namespace zdp {

/// Closed-loop invariant subspace span(S), normalized so that the bottom
/// nz x nz block of S is the identity. Points on it are (S_eta^T z, z).
struct InvariantSubspace {
  MatrixXd s;       // n x nz
  MatrixXd s_eta;   // nz x gamma
  MatrixXd j;       // nz x nz, A_cl S = S J
  std::vector<double> chosen_eigenvalues;
};

/// Output y = eta_1 - s_eta1^T z with row C = [1 0 -s_eta1^T].
struct LinearZdp {
  VectorXd s_eta1;
  Eigen::RowVectorXd c;
  GainMatrix k;
  double p = 1.0;
};

struct EMatrixReport {
  MatrixXd e;                     // gamma x n, row i = C A_cl^i
  VectorXd ladder;                // C A_cl^i B, i = 0..gamma-1
  std::vector<double> m_k;        // -s^T A_z^k a_eta1
  std::vector<Eigen::RowVectorXd> o_k;  // -s^T A_z^k
  std::vector<double> q_k;        // O_k (a_eta1 + A_z a_eta2)
  double p = 1.0;
};

enum class SubspacePreference {
  /// Greedy pick maximizing the smallest singular value of the z-projection.
  kBestConditioned,
  /// The nz eigenvalues closest to the imaginary axis.
  kSlowest,
};

InvariantSubspace select_invariant_subspace(
    const MatrixXd& a_cl, int gamma, int nz,
    SubspacePreference preference = SubspacePreference::kBestConditioned);

/// Throws ZdpError(kRelativeDegreeLoss) when |p| < 1e-8.
LinearZdp build_linear_zdp(const InvariantSubspace& sub, const LinearModel& model,
                           const GainMatrix& k);

EMatrixReport build_e_matrix(const LinearZdp& zdp, const LinearModel& model,
                             const MatrixXd& a_cl, int gamma);

/// 1 - dpsi_1/dz . domega/deta_2 at zeta. Returns 1 for gamma == 1.
double check_relative_degree_nonlinear(
    const NormalFormSystem& nf,
    const std::function<VectorXd(const VectorXd&)>& psi1_grad,
    const NzState& zeta);

/// psi_lin(z) = S_eta^T z.
VectorXd psi_lin_eval(const InvariantSubspace& sub, const VectorXd& z);

}  // namespace zdp
