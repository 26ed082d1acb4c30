#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace zdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { kRelu, kTanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Feedforward network psi(z) = skip z + W_L s(... s(W_0 z + b_0) ...) + b_L.
/// The optional linear skip term (gamma x nz, empty when unused) carries the
/// linear part of the map so that the hidden layers only learn the nonlinear
/// correction.
struct MlpParams {
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;
  MatrixXd skip;
  Activation activation = Activation::kRelu;

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  bool has_skip() const { return skip.size() > 0; }

  /// Throws ZdpError(kValidation) when shapes do not chain or values are
  /// non-finite.
  void validate() const;

  std::size_t parameter_count() const;
  VectorXd flatten() const;
  /// Same shapes, values taken from `flat`.
  MlpParams with_values(const VectorXd& flat) const;

  /// Hidden widths `hidden`, uniform init scaled by fan-in (He for rectifier,
  /// Glorot for tanh). Output layer and skip start at zero when
  /// `zero_output` is set.
  static MlpParams random(int input_dim, const std::vector<int>& hidden,
                          int output_dim, Activation activation,
                          std::uint64_t seed, bool with_skip = false,
                          bool zero_output = false);
};

VectorXd mlp_forward(const MlpParams& params, const VectorXd& z);

/// Exact d psi / dz, shape output_dim x input_dim.
MatrixXd mlp_input_jacobian(const MlpParams& params, const VectorXd& z);

/// Value, input Jacobian and the derivative of the Jacobian along v:
/// d/ds J(z + s v) at s = 0.
struct MlpJet {
  VectorXd value;
  MatrixXd jacobian;
  MatrixXd jacobian_dot;
};
MlpJet mlp_jet(const MlpParams& params, const VectorXd& z, const VectorXd& v);

/// Reverse pass through the pair (psi(z), J(z) v). Given adjoints for the
/// value and the tangent, returns the parameter gradient (flattened in
/// MlpParams::flatten order) and the adjoint of v.
struct MlpDualGradient {
  VectorXd params;
  VectorXd v;
};
MlpDualGradient mlp_dual_backprop(const MlpParams& params, const VectorXd& z,
                                  const VectorXd& v, const VectorXd& value_adjoint,
                                  const VectorXd& tangent_adjoint);

}  // namespace zdp
