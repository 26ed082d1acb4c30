#include "zdp/mlp.hpp"

#include <cmath>
#include <random>

#include "zdp/errors.hpp"

namespace zdp {

std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ZdpError(ErrorKind::kValidation, "unknown activation '" + s + "'");
}

namespace {

// First and second derivative of the activation, elementwise.
struct ActDerivs {
  VectorXd value;
  VectorXd d1;
  VectorXd d2;
};

ActDerivs activate(Activation a, const VectorXd& s) {
  ActDerivs out{VectorXd(s.size()), VectorXd(s.size()), VectorXd(s.size())};
  if (a == Activation::kRelu) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const bool on = s(i) > 0.0;
      out.value(i) = on ? s(i) : 0.0;
      out.d1(i) = on ? 1.0 : 0.0;
      out.d2(i) = 0.0;
    }
  } else {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double t = std::tanh(s(i));
      out.value(i) = t;
      out.d1(i) = 1.0 - t * t;
      out.d2(i) = -2.0 * t * (1.0 - t * t);
    }
  }
  return out;
}

}  // namespace

void MlpParams::validate() const {
  if (weights.empty() || weights.size() != biases.size()) {
    throw ZdpError(ErrorKind::kValidation, "network needs matching weights and biases");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != biases[l].size()) {
      throw ZdpError(ErrorKind::kValidation, "bias length does not match layer width");
    }
    if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
      throw ZdpError(ErrorKind::kValidation, "layer shapes do not chain");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw ZdpError(ErrorKind::kValidation, "non-finite network parameter");
    }
  }
  if (has_skip() && (skip.rows() != output_dim() || skip.cols() != input_dim() ||
                     !skip.allFinite())) {
    throw ZdpError(ErrorKind::kValidation, "skip matrix shape or values invalid");
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t count = static_cast<std::size_t>(skip.size());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    count += weights[l].size() + biases[l].size();
  }
  return count;
}

VectorXd MlpParams::flatten() const {
  VectorXd flat(parameter_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.segment(off, weights[l].size()) =
        Eigen::Map<const VectorXd>(weights[l].data(), weights[l].size());
    off += weights[l].size();
    flat.segment(off, biases[l].size()) = biases[l];
    off += biases[l].size();
  }
  if (has_skip()) {
    flat.segment(off, skip.size()) = Eigen::Map<const VectorXd>(skip.data(), skip.size());
  }
  return flat;
}

MlpParams MlpParams::with_values(const VectorXd& flat) const {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ZdpError(ErrorKind::kValidation, "flat parameter vector has the wrong length");
  }
  MlpParams out = *this;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.weights[l] = Eigen::Map<const MatrixXd>(flat.data() + off, weights[l].rows(),
                                                weights[l].cols());
    off += weights[l].size();
    out.biases[l] = flat.segment(off, biases[l].size());
    off += biases[l].size();
  }
  if (has_skip()) {
    out.skip = Eigen::Map<const MatrixXd>(flat.data() + off, skip.rows(), skip.cols());
  }
  return out;
}

MlpParams MlpParams::random(int input_dim, const std::vector<int>& hidden,
                            int output_dim, Activation activation,
                            std::uint64_t seed, bool with_skip, bool zero_output) {
  std::mt19937_64 rng(seed);
  MlpParams p;
  p.activation = activation;
  int fan_in = input_dim;
  std::vector<int> widths = hidden;
  widths.push_back(output_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const int fan_out = widths[l];
    const double bound = activation == Activation::kRelu
                             ? std::sqrt(6.0 / fan_in)
                             : std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixXd w(fan_out, fan_in);
    const bool last = l + 1 == widths.size();
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        w(i, j) = (last && zero_output) ? 0.0 : dist(rng);
      }
    }
    p.weights.push_back(w);
    p.biases.push_back(VectorXd::Zero(fan_out));
    fan_in = fan_out;
  }
  if (with_skip) p.skip = MatrixXd::Zero(output_dim, input_dim);
  return p;
}

VectorXd mlp_forward(const MlpParams& params, const VectorXd& z) {
  VectorXd x = z;
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    x = activate(params.activation, params.weights[l] * x + params.biases[l]).value;
  }
  VectorXd out = params.weights.back() * x + params.biases.back();
  if (params.has_skip()) out += params.skip * z;
  return out;
}

MatrixXd mlp_input_jacobian(const MlpParams& params, const VectorXd& z) {
  VectorXd x = z;
  MatrixXd m = MatrixXd::Identity(z.size(), z.size());
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const ActDerivs a = activate(params.activation, params.weights[l] * x + params.biases[l]);
    m = a.d1.asDiagonal() * (params.weights[l] * m);
    x = a.value;
  }
  MatrixXd jac = params.weights.back() * m;
  if (params.has_skip()) jac += params.skip;
  return jac;
}

MlpJet mlp_jet(const MlpParams& params, const VectorXd& z, const VectorXd& v) {
  VectorXd x = z;
  VectorXd t = v;
  MatrixXd m = MatrixXd::Identity(z.size(), z.size());
  MatrixXd m_dot = MatrixXd::Zero(z.size(), z.size());
  const std::size_t layers = params.weights.size();
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const MatrixXd& w = params.weights[l];
    const ActDerivs a = activate(params.activation, w * x + params.biases[l]);
    const VectorXd s_dot = w * t;
    const MatrixXd wm = w * m;
    const VectorXd d1_dot = a.d2.cwiseProduct(s_dot);
    m_dot = d1_dot.asDiagonal() * wm + a.d1.asDiagonal() * (w * m_dot);
    m = a.d1.asDiagonal() * wm;
    t = a.d1.cwiseProduct(s_dot);
    x = a.value;
  }
  MlpJet jet;
  jet.value = params.weights.back() * x + params.biases.back();
  jet.jacobian = params.weights.back() * m;
  jet.jacobian_dot = params.weights.back() * m_dot;
  if (params.has_skip()) {
    jet.value += params.skip * z;
    jet.jacobian += params.skip;
  }
  return jet;
}

MlpDualGradient mlp_dual_backprop(const MlpParams& params, const VectorXd& z,
                                  const VectorXd& v, const VectorXd& value_adjoint,
                                  const VectorXd& tangent_adjoint) {
  const std::size_t layers = params.weights.size();
  // Layer inputs (x, t) and hidden pre-activation data.
  std::vector<VectorXd> xs{z};
  std::vector<VectorXd> ts{v};
  std::vector<ActDerivs> acts;
  std::vector<VectorXd> s_dots;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const MatrixXd& w = params.weights[l];
    acts.push_back(activate(params.activation, w * xs.back() + params.biases[l]));
    s_dots.push_back(w * ts.back());
    xs.push_back(acts.back().value);
    ts.push_back(acts.back().d1.cwiseProduct(s_dots.back()));
  }

  std::vector<MatrixXd> g_w(layers);
  std::vector<VectorXd> g_b(layers);
  VectorXd gs = value_adjoint;
  VectorXd gs_dot = tangent_adjoint;
  MlpDualGradient out;
  for (std::size_t li = layers; li-- > 0;) {
    const MatrixXd& w = params.weights[li];
    g_w[li] = gs * xs[li].transpose() + gs_dot * ts[li].transpose();
    g_b[li] = gs;
    const VectorXd gx = w.transpose() * gs;
    const VectorXd gt = w.transpose() * gs_dot;
    if (li > 0) {
      const ActDerivs& a = acts[li - 1];
      gs = a.d1.cwiseProduct(gx) + a.d2.cwiseProduct(s_dots[li - 1]).cwiseProduct(gt);
      gs_dot = a.d1.cwiseProduct(gt);
    } else {
      out.v = gt;
    }
  }

  out.params.resize(params.parameter_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    out.params.segment(off, g_w[l].size()) =
        Eigen::Map<const VectorXd>(g_w[l].data(), g_w[l].size());
    off += g_w[l].size();
    out.params.segment(off, g_b[l].size()) = g_b[l];
    off += g_b[l].size();
  }
  if (params.has_skip()) {
    const MatrixXd g_skip = value_adjoint * z.transpose() + tangent_adjoint * v.transpose();
    out.params.segment(off, g_skip.size()) =
        Eigen::Map<const VectorXd>(g_skip.data(), g_skip.size());
    out.v += params.skip.transpose() * tangent_adjoint;
  }
  return out;
}

}  // namespace zdp
