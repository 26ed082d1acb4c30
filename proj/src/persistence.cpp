#include "zdp/persistence.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>

#include "zdp/errors.hpp"

namespace zdp {

using nlohmann::json;

namespace {

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols,
                     const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ZdpError(ErrorKind::kValidation, what + ": wrong row count");
  }
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ZdpError(ErrorKind::kValidation, what + ": wrong column count");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[k].get<double>();
  }
  if (!m.allFinite()) throw ZdpError(ErrorKind::kValidation, what + ": non-finite entry");
  return m;
}

MatrixXd matrix_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ZdpError(ErrorKind::kValidation, what + ": expected a non-empty matrix");
  }
  return matrix_from(j, static_cast<Eigen::Index>(j.size()),
                     static_cast<Eigen::Index>(j[0].size()), what);
}

VectorXd vector_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw ZdpError(ErrorKind::kValidation, what + ": expected an array");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

const json& field(const json& j, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ZdpError(ErrorKind::kValidation, "model file is missing '" + key + "'");
  }
  return j.at(key);
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ZdpError(ErrorKind::kValidation, std::string("malformed model file: ") + e.what());
  }
}

template <typename Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ZdpError(ErrorKind::kValidation, std::string("malformed model file: ") + e.what());
  }
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

std::string linear_model_to_json(const LinearZdpModel& model) {
  json j;
  j["kind"] = "linear-zdp";
  j["system"] = model.system;
  j["gamma"] = model.gamma;
  j["nz"] = model.nz;
  j["poles"] = model.poles;
  j["s"] = matrix_json(model.subspace.s);
  j["s_eta"] = matrix_json(model.subspace.s_eta);
  j["j"] = matrix_json(model.subspace.j);
  j["chosen_eigenvalues"] = model.subspace.chosen_eigenvalues;
  j["s_eta1"] = vector_json(model.zdp.s_eta1);
  j["c"] = vector_json(model.zdp.c.transpose());
  j["k"] = vector_json(model.zdp.k.k.transpose());
  j["p"] = model.zdp.p;
  return j.dump(2) + "\n";
}

LinearZdpModel linear_model_from_json(const std::string& text) {
  const json j = parse(text);
  return guarded([&] {
    if (field(j, "kind") != "linear-zdp") {
      throw ZdpError(ErrorKind::kValidation, "not a linear ZDP model file");
    }
    LinearZdpModel m;
    m.system = field(j, "system").get<std::string>();
    m.gamma = field(j, "gamma").get<int>();
    m.nz = field(j, "nz").get<int>();
    if (m.gamma <= 0 || m.nz <= 0) {
      throw ZdpError(ErrorKind::kValidation, "model dimensions must be positive");
    }
    const int n = m.gamma + m.nz;
    m.poles = field(j, "poles").get<std::vector<double>>();
    m.subspace.s = matrix_from(field(j, "s"), n, m.nz, "s");
    m.subspace.s_eta = matrix_from(field(j, "s_eta"), m.nz, m.gamma, "s_eta");
    m.subspace.j = matrix_from(field(j, "j"), m.nz, m.nz, "j");
    m.subspace.chosen_eigenvalues = field(j, "chosen_eigenvalues").get<std::vector<double>>();
    m.zdp.s_eta1 = vector_from(field(j, "s_eta1"), "s_eta1");
    m.zdp.c = vector_from(field(j, "c"), "c").transpose();
    m.zdp.k.k = vector_from(field(j, "k"), "k").transpose();
    m.zdp.p = field(j, "p").get<double>();
    if (m.zdp.c.size() != n || m.zdp.k.k.size() != n || m.zdp.s_eta1.size() != m.nz) {
      throw ZdpError(ErrorKind::kValidation, "model vectors have inconsistent sizes");
    }
    return m;
  });
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  const MlpParams& p = ckpt.params;
  json j;
  j["kind"] = "mlp-zdp";
  j["system"] = ckpt.system;
  j["input_dim"] = p.input_dim();
  j["output_dim"] = p.output_dim();
  j["activation"] = to_string(p.activation);
  json layers = json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    layers.push_back({{"weights", matrix_json(p.weights[l])}, {"bias", vector_json(p.biases[l])}});
  }
  j["layers"] = layers;
  j["skip"] = p.has_skip() ? matrix_json(p.skip) : json::array();
  j["psi_lin"] = matrix_json(ckpt.psi_lin);
  j["s"] = matrix_json(ckpt.s);
  const TrainingMetadata& m = ckpt.meta;
  j["training"] = {{"seed", m.seed},
                   {"steps", m.steps},
                   {"batch_size", m.batch_size},
                   {"learning_rate", m.learning_rate},
                   {"optimizer", m.optimizer},
                   {"pretrain_steps", m.pretrain_steps},
                   {"pretrain_mse", m.pretrain_mse},
                   {"initial_loss", m.initial_loss},
                   {"final_loss", m.final_loss}};
  return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json j = parse(text);
  return guarded([&] {
    if (field(j, "kind") != "mlp-zdp") {
      throw ZdpError(ErrorKind::kValidation, "not a network checkpoint");
    }
    Checkpoint c;
    c.system = field(j, "system").get<std::string>();
    c.params.activation = activation_from_string(field(j, "activation").get<std::string>());
    for (const json& layer : field(j, "layers")) {
      c.params.weights.push_back(matrix_from(field(layer, "weights"), "weights"));
      c.params.biases.push_back(vector_from(field(layer, "bias"), "bias"));
    }
    if (c.params.weights.empty()) {
      throw ZdpError(ErrorKind::kValidation, "checkpoint has no layers");
    }
    const json& skip = field(j, "skip");
    if (!skip.empty()) c.params.skip = matrix_from(skip, "skip");
    c.params.validate();
    if (c.params.input_dim() != field(j, "input_dim").get<int>() ||
        c.params.output_dim() != field(j, "output_dim").get<int>()) {
      throw ZdpError(ErrorKind::kValidation, "checkpoint dimensions disagree with its layers");
    }
    c.psi_lin = matrix_from(field(j, "psi_lin"), c.params.output_dim(), c.params.input_dim(),
                            "psi_lin");
    c.s = matrix_from(field(j, "s"), c.params.output_dim() + c.params.input_dim(),
                      c.params.input_dim(), "s");
    const json& t = field(j, "training");
    c.meta.seed = field(t, "seed").get<std::uint64_t>();
    c.meta.steps = field(t, "steps").get<int>();
    c.meta.batch_size = field(t, "batch_size").get<int>();
    c.meta.learning_rate = field(t, "learning_rate").get<double>();
    c.meta.optimizer = field(t, "optimizer").get<std::string>();
    c.meta.pretrain_steps = field(t, "pretrain_steps").get<int>();
    c.meta.pretrain_mse = field(t, "pretrain_mse").get<double>();
    c.meta.initial_loss = field(t, "initial_loss").get<double>();
    c.meta.final_loss = field(t, "final_loss").get<double>();
    return c;
  });
}

std::string model_kind(const std::string& text) {
  const json j = parse(text);
  if (j.is_object() && j.contains("kind") && j["kind"].is_string()) {
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "linear-zdp" || kind == "mlp-zdp") return kind;
  }
  throw ZdpError(ErrorKind::kValidation, "unrecognized model file");
}

std::string trajectory_csv(const Trajectory& traj, int gamma) {
  std::ostringstream out;
  const std::size_t n = traj.states.empty() ? 0 : traj.states.front().size();
  out << "t";
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(i) < gamma) {
      out << ",eta" << i + 1;
    } else {
      out << ",z" << i + 1 - gamma;
    }
  }
  out << ",u,e_norm,z_norm,invariance_residual\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << num(traj.times[k]);
    for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) out << ',' << num(traj.states[k](i));
    out << ',' << (k < traj.inputs.size() ? num(traj.inputs[k]) : "nan");
    const StepDiagnostics d = k < traj.aux.size() ? traj.aux[k] : StepDiagnostics{};
    out << ',' << num(d.e_norm) << ',' << num(d.z_norm) << ',' << num(d.invariance_residual)
        << '\n';
  }
  return out.str();
}

std::string roa_csv(const RoaResult& result) {
  std::ostringstream out;
  out << "theta,theta_dot,controller,success,settle_time\n";
  for (std::size_t c = 0; c < result.controllers.size(); ++c) {
    for (std::size_t it = 0; it < result.thetas.size(); ++it) {
      for (std::size_t id = 0; id < result.theta_dots.size(); ++id) {
        const std::size_t cell = it * result.theta_dots.size() + id;
        const double settle = result.settle_times[c][cell];
        out << num(result.thetas[it]) << ',' << num(result.theta_dots[id]) << ','
            << result.controllers[c] << ',' << (result.success[c][cell] ? 1 : 0) << ','
            << (std::isnan(settle) ? std::string("nan") : num(settle)) << '\n';
      }
    }
  }
  return out.str();
}

std::string loss_history_csv(const std::vector<HistoryEntry>& history) {
  std::ostringstream out;
  out << "step,mean_residual,max_residual\n";
  for (const auto& h : history) {
    out << h.step << ',' << num(h.mean_residual) << ',' << num(h.max_residual) << '\n';
  }
  return out.str();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ZdpError(ErrorKind::kValidation, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ZdpError(ErrorKind::kValidation, "cannot write '" + path + "'");
  out << text;
}

}  // namespace zdp
