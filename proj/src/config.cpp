#include "zdp/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/fmt/fmt.h>

#include "zdp/errors.hpp"

namespace zdp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw ZdpError(ErrorKind::kValidation, "key '" + key + "': '" + raw + "' is not a number");
  }
  return v;
}

long long parse_integer(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) {
    throw ZdpError(ErrorKind::kValidation, "key '" + key + "': '" + raw + "' is not an integer");
  }
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  if (trim(raw).empty()) return out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true") return true;
  if (s == "false") return false;
  throw ZdpError(ErrorKind::kValidation, "key '" + key + "': expected true or false");
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_double(v[i]);
  }
  return out;
}

std::vector<double> to_doubles(const VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string subspace_name(SubspacePreference p) {
  return p == SubspacePreference::kSlowest ? "slowest" : "best-conditioned";
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

Field real(const std::string& section, const std::string& key,
           std::function<double&(ExperimentConfig&)> ref) {
  return {section, key,
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_double(k, v);
          },
          [ref](const ExperimentConfig& c) {
            return fmt_double(ref(const_cast<ExperimentConfig&>(c)));
          }};
}

Field integer(const std::string& section, const std::string& key,
              std::function<int&(ExperimentConfig&)> ref) {
  return {section, key,
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) {
            ref(c) = static_cast<int>(parse_integer(k, v));
          },
          [ref](const ExperimentConfig& c) {
            return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
          }};
}

Field list(const std::string& section, const std::string& key,
           std::function<std::vector<double>&(ExperimentConfig&)> ref) {
  return {section, key,
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) {
            ref(c) = parse_list(k, v);
          },
          [ref](const ExperimentConfig& c) {
            return fmt_list(ref(const_cast<ExperimentConfig&>(c)));
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using C = ExperimentConfig;
    std::vector<Field> f;
    f.push_back({"system", "kind",
                 [](C& c, const std::string& k, const std::string& v) {
                   c.system_kind = trim(v);
                   if (c.system_kind != "cartpole" && c.system_kind != "linear") {
                     throw ZdpError(ErrorKind::kValidation,
                                    "key '" + k + "': expected cartpole or linear");
                   }
                 },
                 [](const C& c) { return c.system_kind; }});
    f.push_back(real("system", "cart_mass_kg", [](C& c) -> double& { return c.cartpole.cart_mass; }));
    f.push_back(real("system", "pole_mass_kg", [](C& c) -> double& { return c.cartpole.pole_mass; }));
    f.push_back(real("system", "pole_length_m", [](C& c) -> double& { return c.cartpole.pole_length; }));
    f.push_back(real("system", "gravity_m_per_s2", [](C& c) -> double& { return c.cartpole.gravity; }));
    f.push_back(real("system", "damping_threshold_m_per_s",
                     [](C& c) -> double& { return c.cartpole.damping_threshold; }));
    f.push_back(integer("system", "linear_gamma", [](C& c) -> int& { return c.linear_gamma; }));
    f.push_back(list("system", "linear_a_eta", [](C& c) -> std::vector<double>& { return c.linear_a_eta; }));
    f.push_back(list("system", "linear_a_z", [](C& c) -> std::vector<double>& { return c.linear_a_z; }));

    f.push_back(list("construct", "poles", [](C& c) -> std::vector<double>& { return c.poles; }));
    f.push_back({"construct", "subspace",
                 [](C& c, const std::string& k, const std::string& v) {
                   const std::string s = trim(v);
                   if (s == "best-conditioned") {
                     c.subspace = SubspacePreference::kBestConditioned;
                   } else if (s == "slowest") {
                     c.subspace = SubspacePreference::kSlowest;
                   } else {
                     throw ZdpError(ErrorKind::kValidation,
                                    "key '" + k + "': expected best-conditioned or slowest");
                   }
                 },
                 [](const C& c) { return subspace_name(c.subspace); }});

    f.push_back(list("cost", "q_diag", [](C& c) -> std::vector<double>& { return c.q_diag; }));
    f.push_back(real("cost", "r", [](C& c) -> double& { return c.r; }));

    f.push_back(real("ilqr", "horizon_s", [](C& c) -> double& { return c.ilqr.horizon_seconds; }));
    f.push_back(real("ilqr", "dt_s", [](C& c) -> double& { return c.ilqr.dt; }));
    f.push_back(integer("ilqr", "max_iters", [](C& c) -> int& { return c.ilqr.max_iters; }));
    f.push_back(real("ilqr", "cost_tol", [](C& c) -> double& { return c.ilqr.cost_tol; }));
    f.push_back(real("ilqr", "regularization", [](C& c) -> double& { return c.ilqr.regularization; }));
    f.push_back(real("ilqr", "escape_bound", [](C& c) -> double& { return c.ilqr.escape_bound; }));

    f.push_back({"network", "hidden",
                 [](C& c, const std::string& k, const std::string& v) {
                   c.hidden.clear();
                   for (double w : parse_list(k, v)) {
                     if (w != std::floor(w)) {
                       throw ZdpError(ErrorKind::kValidation, "key '" + k + "': widths are integers");
                     }
                     c.hidden.push_back(static_cast<int>(w));
                   }
                 },
                 [](const C& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.hidden.size(); ++i) {
                     if (i) out += ", ";
                     out += std::to_string(c.hidden[i]);
                   }
                   return out;
                 }});
    f.push_back({"network", "activation",
                 [](C& c, const std::string&, const std::string& v) {
                   c.activation = activation_from_string(trim(v));
                 },
                 [](const C& c) { return to_string(c.activation); }});
    f.push_back({"network", "skip",
                 [](C& c, const std::string& k, const std::string& v) { c.skip = parse_bool(k, v); },
                 [](const C& c) { return std::string(c.skip ? "true" : "false"); }});

    f.push_back(integer("training", "batch_size", [](C& c) -> int& { return c.train.batch_size; }));
    f.push_back(real("training", "learning_rate", [](C& c) -> double& { return c.train.learning_rate; }));
    f.push_back(integer("training", "steps", [](C& c) -> int& { return c.train.steps; }));
    f.push_back({"training", "z_box_lo",
                 [](C& c, const std::string& k, const std::string& v) {
                   c.train.box_lo = to_vector(parse_list(k, v));
                 },
                 [](const C& c) { return fmt_list(to_doubles(c.train.box_lo)); }});
    f.push_back({"training", "z_box_hi",
                 [](C& c, const std::string& k, const std::string& v) {
                   c.train.box_hi = to_vector(parse_list(k, v));
                 },
                 [](const C& c) { return fmt_list(to_doubles(c.train.box_hi)); }});
    f.push_back(integer("training", "pretrain_steps", [](C& c) -> int& { return c.train.pretrain_steps; }));
    f.push_back(real("training", "pretrain_learning_rate",
                     [](C& c) -> double& { return c.train.pretrain_learning_rate; }));
    f.push_back(integer("training", "pretrain_batch", [](C& c) -> int& { return c.train.pretrain_batch; }));
    f.push_back(real("training", "pretrain_tol", [](C& c) -> double& { return c.train.pretrain_tol; }));
    f.push_back({"training", "optimizer",
                 [](C& c, const std::string&, const std::string& v) {
                   c.train.optimizer = optimizer_from_string(trim(v));
                 },
                 [](const C& c) { return to_string(c.train.optimizer); }});
    f.push_back({"training", "anchor_origin",
                 [](C& c, const std::string& k, const std::string& v) {
                   c.train.anchor_origin = parse_bool(k, v);
                 },
                 [](const C& c) { return std::string(c.train.anchor_origin ? "true" : "false"); }});
    f.push_back(real("training", "momentum", [](C& c) -> double& { return c.train.momentum; }));
    f.push_back(real("training", "final_lr_fraction",
                     [](C& c) -> double& { return c.train.final_lr_fraction; }));

    f.push_back(real("tracking", "kp", [](C& c) -> double& { return c.kp; }));
    f.push_back(real("tracking", "kd", [](C& c) -> double& { return c.kd; }));

    f.push_back(real("simulate", "t_final_s", [](C& c) -> double& { return c.sim.t_final; }));
    f.push_back(real("simulate", "dt_s", [](C& c) -> double& { return c.sim.dt; }));
    f.push_back(real("simulate", "escape_bound", [](C& c) -> double& { return c.sim.escape_bound; }));
    f.push_back(list("simulate", "initial_state",
                     [](C& c) -> std::vector<double>& { return c.initial_state; }));

    f.push_back(real("roa", "theta_min_rad", [](C& c) -> double& { return c.roa.theta_min; }));
    f.push_back(real("roa", "theta_max_rad", [](C& c) -> double& { return c.roa.theta_max; }));
    f.push_back(integer("roa", "theta_cells", [](C& c) -> int& { return c.roa.theta_cells; }));
    f.push_back(real("roa", "theta_dot_min_rad_per_s", [](C& c) -> double& { return c.roa.theta_dot_min; }));
    f.push_back(real("roa", "theta_dot_max_rad_per_s", [](C& c) -> double& { return c.roa.theta_dot_max; }));
    f.push_back(integer("roa", "theta_dot_cells", [](C& c) -> int& { return c.roa.theta_dot_cells; }));
    f.push_back(real("roa", "t_final_s", [](C& c) -> double& { return c.settle.t_final; }));
    f.push_back(real("roa", "dt_s", [](C& c) -> double& { return c.settle.dt; }));
    f.push_back(real("roa", "settle_tol", [](C& c) -> double& { return c.settle.settle_tol; }));
    f.push_back(real("roa", "escape_bound", [](C& c) -> double& { return c.settle.escape_bound; }));

    f.push_back(integer("verify", "samples", [](C& c) -> int& { return c.verify_samples; }));
    f.push_back(real("verify", "radius", [](C& c) -> double& { return c.verify_radius; }));
    f.push_back(real("verify", "residual_tol", [](C& c) -> double& { return c.verify_residual_tol; }));
    f.push_back(real("verify", "decoupling_tol", [](C& c) -> double& { return c.verify_decoupling_tol; }));

    f.push_back({"run", "seed",
                 [](C& c, const std::string& k, const std::string& v) {
                   const long long s = parse_integer(k, v);
                   if (s < 0) throw ZdpError(ErrorKind::kValidation, "seed must be non-negative");
                   c.seed = static_cast<std::uint64_t>(s);
                 },
                 [](const C& c) { return std::to_string(c.seed); }});
    f.push_back(integer("run", "jobs", [](C& c) -> int& { return c.jobs; }));
    f.push_back({"run", "output_dir",
                 [](C& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
                 [](const C& c) { return c.output_dir; }});
    return f;
  }();
  return table;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  train.box_lo = Eigen::Vector2d(-1.2, -0.6);
  train.box_hi = Eigen::Vector2d(1.2, 0.6);
}

void ExperimentConfig::validate() const {
  std::size_t n = 4;
  std::size_t nz = 2;
  if (system_kind == "cartpole") {
    cartpole.validate();
  } else if (system_kind == "linear") {
    if (linear_gamma <= 0) {
      throw ZdpError(ErrorKind::kValidation, "linear system needs gamma > 0");
    }
    nz = static_cast<std::size_t>(std::lround(std::sqrt(linear_a_z.size())));
    if (nz * nz != linear_a_z.size() || linear_a_eta.size() != nz * linear_gamma) {
      throw ZdpError(ErrorKind::kValidation, "linear system blocks have inconsistent sizes");
    }
    n = nz + static_cast<std::size_t>(linear_gamma);
  } else {
    throw ZdpError(ErrorKind::kValidation, "unknown system kind '" + system_kind + "'");
  }
  if (poles.size() != n || q_diag.size() != n || initial_state.size() != n) {
    throw ZdpError(ErrorKind::kValidation,
                   "poles, q_diag and initial_state need one entry per state (" +
                       std::to_string(n) + ")");
  }
  if (static_cast<std::size_t>(train.box_lo.size()) != nz) {
    throw ZdpError(ErrorKind::kValidation,
                   "z_box bounds need one entry per z coordinate (" + std::to_string(nz) + ")");
  }
  if (!(r > 0.0)) throw ZdpError(ErrorKind::kValidation, "r must be positive");
  for (double q : q_diag) {
    if (!(q > 0.0)) throw ZdpError(ErrorKind::kValidation, "Q diagonal must be positive");
  }
  if (hidden.empty()) throw ZdpError(ErrorKind::kValidation, "network needs a hidden layer");
  for (int w : hidden) {
    if (w <= 0) throw ZdpError(ErrorKind::kValidation, "layer widths must be positive");
  }
  if (!(kp > 0.0) || !(kd > 0.0)) {
    throw ZdpError(ErrorKind::kValidation, "tracking gains must be positive");
  }
  if (jobs <= 0) throw ZdpError(ErrorKind::kValidation, "jobs must be positive");
  if (verify_samples <= 0 || !(verify_radius > 0.0) || !(verify_residual_tol > 0.0) ||
      !(verify_decoupling_tol > 0.0)) {
    throw ZdpError(ErrorKind::kValidation, "verification settings must be positive");
  }
  ilqr.validate();
  train.validate();
  sim.validate();
  roa.validate();
  settle.validate();
}

QuadraticCost ExperimentConfig::cost() const {
  QuadraticCost c;
  c.q = to_vector(q_diag).asDiagonal();
  c.r = r;
  return c;
}

TrackingGains ExperimentConfig::gains() const { return TrackingGains::pd(kp, kd); }

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ZdpError(ErrorKind::kValidation, std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ZdpError(ErrorKind::kValidation, "key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      const auto& table = fields();
      auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) {
        return f.section == section && f.key == key;
      });
      if (it == table.end()) {
        throw ZdpError(ErrorKind::kValidation, "unknown config key '" + section + "." + key + "'");
      }
      it->set(cfg, section + "." + key, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ZdpError(ErrorKind::kValidation, "cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string current;
  for (const auto& f : fields()) {
    if (f.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

}  // namespace zdp
