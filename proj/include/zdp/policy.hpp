#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>

#include "zdp/mlp.hpp"

namespace zdp {

/// A map psi: z -> eta whose graph is the target manifold.
class ZeroDynamicsPolicy {
 public:
  virtual ~ZeroDynamicsPolicy() = default;

  virtual int gamma() const = 0;
  virtual int nz() const = 0;
  virtual VectorXd eval(const VectorXd& z) const = 0;
  /// d psi / dz, gamma x nz.
  virtual MatrixXd jacobian(const VectorXd& z) const = 0;
  /// d/ds jacobian(z + s v) at s = 0.
  virtual MatrixXd jacobian_dot(const VectorXd& z, const VectorXd& v) const = 0;
  virtual std::string kind() const = 0;
};

/// psi(z) = M z. The linear ZDP uses M = S_eta^T; M = 0 gives psi == 0.
class LinearPolicy final : public ZeroDynamicsPolicy {
 public:
  explicit LinearPolicy(MatrixXd m) : m_(std::move(m)) {}

  int gamma() const override { return static_cast<int>(m_.rows()); }
  int nz() const override { return static_cast<int>(m_.cols()); }
  VectorXd eval(const VectorXd& z) const override { return m_ * z; }
  MatrixXd jacobian(const VectorXd&) const override { return m_; }
  MatrixXd jacobian_dot(const VectorXd&, const VectorXd&) const override {
    return MatrixXd::Zero(m_.rows(), m_.cols());
  }
  std::string kind() const override { return "linear"; }

  const MatrixXd& matrix() const { return m_; }

 private:
  MatrixXd m_;
};

class MlpPolicy final : public ZeroDynamicsPolicy {
 public:
  explicit MlpPolicy(MlpParams params);

  int gamma() const override { return params_.output_dim(); }
  int nz() const override { return params_.input_dim(); }
  VectorXd eval(const VectorXd& z) const override { return mlp_forward(params_, z); }
  MatrixXd jacobian(const VectorXd& z) const override {
    return mlp_input_jacobian(params_, z);
  }
  MatrixXd jacobian_dot(const VectorXd& z, const VectorXd& v) const override {
    return mlp_jet(params_, z, v).jacobian_dot;
  }
  std::string kind() const override { return "mlp"; }

  const MlpParams& params() const { return params_; }

 private:
  MlpParams params_;
};

std::shared_ptr<const ZeroDynamicsPolicy> zero_policy(int gamma, int nz);

}  // namespace zdp
