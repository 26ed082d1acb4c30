#pragma once

#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "zdp/dynamics.hpp"

namespace zdp {

/// Linearization xdot = A x + B u. For models coming from a normal form the
/// blocks a_eta1, a_eta2 and a_z are sub-slices of A; for plain models
/// (gamma == 0) they are empty.
struct LinearModel {
  MatrixXd a;
  VectorXd b;
  int gamma = 0;
  VectorXd a_eta1;
  VectorXd a_eta2;
  MatrixXd a_z;

  int n() const { return static_cast<int>(a.rows()); }

  static LinearModel plain(const MatrixXd& a, const VectorXd& b);
};

/// Row gain K for u = -K x.
struct GainMatrix {
  Eigen::RowVectorXd k;
};

struct EigenPairs {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;  // column i pairs with values(i)
};

struct LqrSolution {
  GainMatrix gain;
  MatrixXd p;
  int iterations = 0;
};

using VectorMap = std::function<VectorXd(const VectorXd&)>;

/// Central-difference Jacobian. Throws ZdpError(kNonFinite) on NaN/Inf.
MatrixXd jacobian_fd(const VectorMap& f, const VectorXd& x0,
                     double step = 1e-6);

/// Linearizes the feedback-linearized normal form about the origin.
LinearModel linearize_about_origin(const NormalFormSystem& nf,
                                   double step = 1e-6);

/// Linearizes a control-affine system about the origin (zero input).
LinearModel linearize_system(const ControlAffineSystem& sys,
                             double step = 1e-6);

/// Eigenpairs sorted by ascending real part, then imaginary part.
EigenPairs eig_decompose(const MatrixXd& m);

/// Single-input pole placement (Ackermann). Uncontrollable modes are accepted
/// only when they already coincide with requested poles.
GainMatrix place_poles(const LinearModel& model, const std::vector<double>& poles);

/// Continuous-time LQR by Newton-Kleinman iteration.
LqrSolution lqr_gain(const LinearModel& model, const MatrixXd& q, double r);

/// Solves A^T X + X A + Q = 0 for X.
MatrixXd solve_lyapunov(const MatrixXd& a, const MatrixXd& q);

/// ||A^T P + P A - P B r^-1 B^T P + Q||.
double riccati_residual(const LinearModel& model, const MatrixXd& q, double r,
                        const MatrixXd& p);

MatrixXd controllability_matrix(const LinearModel& model);

/// Numerical rank with threshold rel_tol * sigma_max.
int matrix_rank(const MatrixXd& m, double rel_tol = 1e-8);

bool is_hurwitz(const MatrixXd& m);

}  // namespace zdp
