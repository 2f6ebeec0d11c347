#ifndef SMS_CONFIG_HPP
#define SMS_CONFIG_HPP

#include "sms/common.hpp"
#include "sms/control.hpp"
#include "sms/kinematics.hpp"
#include "sms/model.hpp"
#include "sms/planner.hpp"

#include <toml.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sms {

/// Pass/fail thresholds applied to a finished run.
struct CheckThresholds {
  double joint_error_max = 0.05;   ///< rad, bound on ||q_e||
  double momentum_tol = 1e-7;      ///< on ||h_l|| and ||h_a||
  double reaching_pass_rate = 0.99;
  double decay_rel_tol = 0.2;
  double lyapunov_rate_tol = 1e-8;
};

struct ScenarioConfig {
  std::string case_label = "case";
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/case";
  SmsModel model;
  SmsState initial;
  std::optional<Vec3> r_d_absolute;
  Vec3 r_d_offset = Vec3::Zero();
  PlannerConfig planner;
  SmcGains gains;
  VecX probe_offset; ///< rad per joint, sliding-surface probe run
  CheckThresholds checks;

  /// Goal position: explicit, or the initial end-effector position plus the offset.
  Vec3 r_d() const {
    if (r_d_absolute)
      return *r_d_absolute;
    return forward_kinematics(model, initial).r_e + r_d_offset;
  }
};

class ConfigParseError : public Error {
public:
  ConfigParseError(const std::string &what, long line) : Error(what), line_(line) {}
  long line() const noexcept { return line_; }

private:
  long line_;
};

namespace detail {

class TomlReader {
public:
  explicit TomlReader(std::string prefix) : prefix_(std::move(prefix)) {}

  std::string field(const std::string &key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  static void check_keys(const toml::table &t, const std::string &prefix,
                         std::initializer_list<const char *> allowed) {
    for (const auto &[k, v] : t) {
      bool ok = false;
      for (const char *a : allowed)
        ok = ok || k.str() == a;
      if (!ok) {
        const std::string name = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
        throw ValidationError(name, "unknown key (line " + std::to_string(v.source().begin.line) + ")");
      }
    }
  }

  double number(const toml::table &t, const std::string &key, double fallback) const {
    const toml::node *n = t.get(key);
    if (!n)
      return fallback;
    if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer()))
      return *v;
    throw ValidationError(field(key), "expected a number");
  }

  std::int64_t integer(const toml::table &t, const std::string &key, std::int64_t fallback) const {
    const toml::node *n = t.get(key);
    if (!n)
      return fallback;
    if (auto v = n->value<std::int64_t>(); v && n->is_integer())
      return *v;
    throw ValidationError(field(key), "expected an integer");
  }

  std::string string(const toml::table &t, const std::string &key, const std::string &fallback) const {
    const toml::node *n = t.get(key);
    if (!n)
      return fallback;
    if (auto v = n->value<std::string>(); v && n->is_string())
      return *v;
    throw ValidationError(field(key), "expected a string");
  }

  /// Numeric array of exact length `size`, or any length when size < 0.
  std::optional<VecX> vector(const toml::table &t, const std::string &key, int size) const {
    const toml::node *n = t.get(key);
    if (!n)
      return std::nullopt;
    const toml::array *a = n->as_array();
    if (!a)
      throw ValidationError(field(key), "expected an array of numbers");
    if (size >= 0 && static_cast<int>(a->size()) != size)
      throw ValidationError(field(key), "expected " + std::to_string(size) + " entries");
    VecX v(a->size());
    for (std::size_t i = 0; i < a->size(); ++i) {
      const toml::node &e = *a->get(i);
      auto x = e.value<double>();
      if (!x || !(e.is_floating_point() || e.is_integer()))
        throw ValidationError(field(key) + "[" + std::to_string(i) + "]", "expected a number");
      v(static_cast<Eigen::Index>(i)) = *x;
    }
    return v;
  }

  std::optional<Vec3> vec3(const toml::table &t, const std::string &key) const {
    auto v = vector(t, key, 3);
    if (!v)
      return std::nullopt;
    return Vec3(*v);
  }

  /// Either a 3-entry diagonal or a 3x3 nested array.
  std::optional<Mat3> inertia(const toml::table &t, const std::string &key) const {
    const toml::node *n = t.get(key);
    if (!n)
      return std::nullopt;
    const toml::array *a = n->as_array();
    if (a && a->size() == 3 && a->get(0)->is_array()) {
      Mat3 m;
      for (int r = 0; r < 3; ++r) {
        const toml::array *row = a->get(r)->as_array();
        if (!row || row->size() != 3)
          throw ValidationError(field(key), "expected a 3x3 nested array");
        for (int c = 0; c < 3; ++c) {
          auto x = row->get(c)->value<double>();
          if (!x)
            throw ValidationError(field(key), "expected numbers");
          m(r, c) = *x;
        }
      }
      return m;
    }
    auto d = vector(t, key, 3);
    return Mat3(d->asDiagonal());
  }

  const toml::table *table(const toml::table &t, const std::string &key) const {
    const toml::node *n = t.get(key);
    if (!n)
      return nullptr;
    if (!n->is_table())
      throw ValidationError(field(key), "expected a table");
    return n->as_table();
  }

private:
  std::string prefix_;
};

/// Square matrix from a diagonal list or an n x n nested array.
inline MatX gain_matrix(const toml::table &t, const std::string &key, const std::string &field,
                        int n, const MatX &fallback) {
  const toml::node *node = t.get(key);
  if (!node)
    return fallback;
  const toml::array *a = node->as_array();
  if (!a || static_cast<int>(a->size()) != n)
    throw ValidationError(field, "expected " + std::to_string(n) + " entries");
  MatX m = MatX::Zero(n, n);
  for (int r = 0; r < n; ++r) {
    const toml::node &e = *a->get(r);
    if (const toml::array *row = e.as_array()) {
      if (static_cast<int>(row->size()) != n)
        throw ValidationError(field, "expected an n x n nested array");
      for (int c = 0; c < n; ++c) {
        auto x = row->get(c)->value<double>();
        if (!x)
          throw ValidationError(field, "expected numbers");
        m(r, c) = *x;
      }
    } else {
      auto x = e.value<double>();
      if (!x)
        throw ValidationError(field, "expected numbers");
      m(r, r) = *x;
    }
  }
  return m;
}

inline BaseBoxMode parse_box_mode(const std::string &s) {
  if (s == "outside")
    return BaseBoxMode::outside;
  if (s == "literal_and")
    return BaseBoxMode::literal_and;
  throw ValidationError("planner.base_box_mode", "expected \"outside\" or \"literal_and\"");
}

inline const char *box_mode_name(BaseBoxMode m) {
  return m == BaseBoxMode::outside ? "outside" : "literal_and";
}

} // namespace detail

/// Builds a validated scenario from a parsed TOML table. Unspecified fields
/// take the tabulated defaults (Table 1 body data, Table 2 planner and
/// controller parameters).
inline ScenarioConfig config_from_table(const toml::table &root) {
  using detail::TomlReader;
  TomlReader::check_keys(root, "",
                         {"case", "seed", "output_dir", "r_d", "r_d_offset", "base", "links",
                          "geometry", "initial", "planner", "controller", "checks"});
  ScenarioConfig cfg;
  const TomlReader top("");
  cfg.case_label = top.string(root, "case", "case");
  const std::int64_t seed = top.integer(root, "seed", 1);
  if (seed < 0)
    throw ValidationError("seed", "must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.output_dir = top.string(root, "output_dir", "runs/" + cfg.case_label);
  cfg.r_d_absolute = top.vec3(root, "r_d");
  if (auto off = top.vec3(root, "r_d_offset")) {
    if (cfg.r_d_absolute)
      throw ValidationError("r_d_offset", "give either r_d or r_d_offset, not both");
    cfg.r_d_offset = *off;
  }

  // Bodies
  auto read_body = [](const toml::table *t, const std::string &name, BodyParams b) {
    if (!t)
      return b;
    TomlReader::check_keys(*t, name, {"mass", "inertia", "dims", "axis", "com_offset", "tip_offset"});
    const TomlReader r(name);
    b.mass = r.number(*t, "mass", b.mass);
    if (auto I = r.inertia(*t, "inertia"))
      b.inertia = *I;
    if (auto d = r.vec3(*t, "dims"))
      b.dims = *d;
    return b;
  };
  const toml::table *base_t = top.table(root, "base");
  if (base_t) {
    TomlReader::check_keys(*base_t, "base", {"mass", "inertia", "dims"});
  }
  const BodyParams base = read_body(base_t, "base", table1::base());

  std::vector<BodyParams> links;
  std::vector<const toml::table *> link_tables;
  if (const toml::node *ln = root.get("links")) {
    const toml::array *arr = ln->as_array();
    if (!arr || arr->empty())
      throw ValidationError("links", "expected a non-empty array of tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const std::string name = "links[" + std::to_string(i) + "]";
      const toml::table *lt = arr->get(i)->as_table();
      if (!lt)
        throw ValidationError(name, "expected a table");
      links.push_back(read_body(lt, name, table1::link()));
      link_tables.push_back(lt);
    }
  } else {
    links.assign(3, table1::link());
    link_tables.assign(3, nullptr);
  }
  // Check masses and inertias before geometry is derived from them.
  {
    SmsModel probe;
    probe.base = base;
    probe.links = links;
    probe.joint_axes.assign(links.size(), Vec3::UnitZ());
    probe.link_com_offset.assign(links.size(), Vec3::Zero());
    probe.link_tip_offset.assign(links.size(), Vec3::Zero());
    probe.validate();
  }
  cfg.model = make_planar_model(base, links);
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (!link_tables[i])
      continue;
    const TomlReader r("links[" + std::to_string(i) + "]");
    if (auto a = r.vec3(*link_tables[i], "axis")) {
      if (!(a->norm() > 0.0))
        throw ValidationError(r.field("axis"), "must be nonzero");
      cfg.model.joint_axes[i] = a->normalized();
    }
    if (auto c = r.vec3(*link_tables[i], "com_offset"))
      cfg.model.link_com_offset[i] = *c;
    if (auto c = r.vec3(*link_tables[i], "tip_offset"))
      cfg.model.link_tip_offset[i] = *c;
  }
  if (const toml::table *g = top.table(root, "geometry")) {
    TomlReader::check_keys(*g, "geometry", {"mount_offset"});
    if (auto m = TomlReader("geometry").vec3(*g, "mount_offset"))
      cfg.model.mount_offset = *m;
  }
  cfg.model.validate();
  const int n = cfg.model.dof();

  // Initial state
  cfg.initial = table1::initial_state();
  if (n != 3) {
    cfg.initial.q = VecX::Constant(n, 1.0 * kDegToRad);
    cfg.initial.qd = VecX::Zero(n);
  }
  if (const toml::table *it = top.table(root, "initial")) {
    TomlReader::check_keys(*it, "initial", {"r_b", "eps", "q_deg", "qd_deg", "v_b", "w_b"});
    const TomlReader r("initial");
    if (auto v = r.vec3(*it, "r_b"))
      cfg.initial.r_b = *v;
    if (auto v = r.vector(*it, "eps", 4))
      cfg.initial.eps = Vec4(*v);
    if (auto v = r.vector(*it, "q_deg", n))
      cfg.initial.q = *v * kDegToRad;
    if (auto v = r.vector(*it, "qd_deg", n))
      cfg.initial.qd = *v * kDegToRad;
    if (auto v = r.vec3(*it, "v_b"))
      cfg.initial.v_b = *v;
    if (auto v = r.vec3(*it, "w_b"))
      cfg.initial.w_b = *v;
  }
  if (std::abs(cfg.initial.eps.squaredNorm() - 1.0) > 1e-9)
    throw ValidationError("initial.eps", "must be a unit quaternion");
  cfg.initial.validate(n);

  // Planner
  cfg.planner = table2::planner();
  if (n != 3) {
    cfg.planner.q_max = VecX::Constant(n, 162.0 * kDegToRad);
    cfg.planner.qd_max = VecX::Constant(n, 22.92 * kDegToRad);
    cfg.planner.qdd_max = VecX::Constant(n, 28.65 * kDegToRad);
  }
  cfg.planner.seed = cfg.seed;
  if (const toml::table *pt = top.table(root, "planner")) {
    TomlReader::check_keys(*pt, "planner",
                           {"dt", "horizon", "kappa", "q_max_deg", "qd_max_deg", "qdd_max_deg",
                            "d_safe", "r_th", "terminal_window_fraction", "base_box_margin",
                            "base_box_mode", "candidates", "sweeps", "ee_speed_gain",
                            "ee_speed_max", "ee_decel", "continuity_weight", "rate_weight",
                            "kinematic_substeps"});
    const TomlReader r("planner");
    auto &p = cfg.planner;
    p.dt = r.number(*pt, "dt", p.dt);
    p.horizon = r.number(*pt, "horizon", p.horizon);
    p.kappa = r.number(*pt, "kappa", p.kappa);
    if (auto v = r.vector(*pt, "q_max_deg", n))
      p.q_max = *v * kDegToRad;
    if (auto v = r.vector(*pt, "qd_max_deg", n))
      p.qd_max = *v * kDegToRad;
    if (auto v = r.vector(*pt, "qdd_max_deg", n))
      p.qdd_max = *v * kDegToRad;
    p.d_safe = r.number(*pt, "d_safe", p.d_safe);
    p.r_th = r.number(*pt, "r_th", p.r_th);
    p.terminal_window_fraction = r.number(*pt, "terminal_window_fraction", p.terminal_window_fraction);
    p.base_box_margin = r.number(*pt, "base_box_margin", p.base_box_margin);
    p.base_box_mode = detail::parse_box_mode(r.string(*pt, "base_box_mode", "outside"));
    p.candidate_count = static_cast<int>(r.integer(*pt, "candidates", p.candidate_count));
    p.refine_sweeps = static_cast<int>(r.integer(*pt, "sweeps", p.refine_sweeps));
    p.ee_speed_gain = r.number(*pt, "ee_speed_gain", p.ee_speed_gain);
    p.ee_speed_max = r.number(*pt, "ee_speed_max", p.ee_speed_max);
    p.ee_decel = r.number(*pt, "ee_decel", p.ee_decel);
    p.continuity_weight = r.number(*pt, "continuity_weight", p.continuity_weight);
    p.rate_weight = r.number(*pt, "rate_weight", p.rate_weight);
    p.kinematic_substeps = static_cast<int>(r.integer(*pt, "kinematic_substeps", p.kinematic_substeps));
  }
  cfg.planner.validate(n);

  // Controller
  cfg.gains = table2::gains();
  if (n != 3) {
    cfg.gains.Gamma = 10.0 * MatX::Identity(n, n);
    cfg.gains.K_s = 0.001 * MatX::Identity(n, n);
    cfg.gains.tau_max = VecX::Constant(n, 1.5);
  }
  cfg.probe_offset = VecX::Constant(n, 0.01);
  if (const toml::table *ct = top.table(root, "controller")) {
    TomlReader::check_keys(*ct, "controller", {"K_s", "Gamma", "lambda", "tau_max", "dt", "probe_offset"});
    const TomlReader r("controller");
    cfg.gains.K_s = detail::gain_matrix(*ct, "K_s", "controller.K_s", n, cfg.gains.K_s);
    cfg.gains.Gamma = detail::gain_matrix(*ct, "Gamma", "controller.Gamma", n, cfg.gains.Gamma);
    cfg.gains.lambda = r.number(*ct, "lambda", cfg.gains.lambda);
    if (auto v = r.vector(*ct, "tau_max", n))
      cfg.gains.tau_max = *v;
    cfg.gains.dt_ctrl = r.number(*ct, "dt", cfg.gains.dt_ctrl);
    if (auto v = r.vector(*ct, "probe_offset", n))
      cfg.probe_offset = *v;
  }
  cfg.gains.validate(n);
  if (cfg.gains.dt_ctrl > cfg.planner.dt)
    throw ValidationError("controller.dt", "must not exceed planner.dt");

  if (const toml::table *kt = top.table(root, "checks")) {
    TomlReader::check_keys(*kt, "checks",
                           {"joint_error_max", "momentum_tol", "reaching_pass_rate",
                            "decay_rel_tol", "lyapunov_rate_tol"});
    const TomlReader r("checks");
    auto &c = cfg.checks;
    c.joint_error_max = r.number(*kt, "joint_error_max", c.joint_error_max);
    c.momentum_tol = r.number(*kt, "momentum_tol", c.momentum_tol);
    c.reaching_pass_rate = r.number(*kt, "reaching_pass_rate", c.reaching_pass_rate);
    c.decay_rel_tol = r.number(*kt, "decay_rel_tol", c.decay_rel_tol);
    c.lyapunov_rate_tol = r.number(*kt, "lyapunov_rate_tol", c.lyapunov_rate_tol);
  }
  return cfg;
}

inline ScenarioConfig parse_config(std::string_view text, const std::string &source = "<string>") {
  try {
    const toml::table root = toml::parse(text, source);
    return config_from_table(root);
  } catch (const toml::parse_error &e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
       << e.description();
    throw ConfigParseError(os.str(), e.source().begin.line);
  }
}

inline ScenarioConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// Echo

namespace detail {

inline nlohmann::ordered_json to_json(const VecX &v) {
  auto a = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v(i));
  return a;
}

inline nlohmann::ordered_json to_json(const MatX &m) {
  auto a = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    a.push_back(to_json(VecX(m.row(r).transpose())));
  return a;
}

} // namespace detail

/// Fully resolved configuration (defaults included), in the config schema's
/// units where it uses degrees.
inline nlohmann::ordered_json config_echo(const ScenarioConfig &c) {
  using detail::to_json;
  using J = nlohmann::ordered_json;
  J j;
  j["case"] = c.case_label;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.string();
  if (c.r_d_absolute)
    j["r_d"] = to_json(VecX(*c.r_d_absolute));
  else
    j["r_d_offset"] = to_json(VecX(c.r_d_offset));
  j["r_d_resolved"] = to_json(VecX(c.r_d()));
  auto body = [&](const BodyParams &b) {
    J o;
    o["mass"] = b.mass;
    o["inertia"] = to_json(MatX(b.inertia));
    o["dims"] = to_json(VecX(b.dims));
    return o;
  };
  j["base"] = body(c.model.base);
  J links = J::array();
  for (int i = 0; i < c.model.dof(); ++i) {
    J l = body(c.model.links[i]);
    l["axis"] = to_json(VecX(c.model.joint_axes[i]));
    l["com_offset"] = to_json(VecX(c.model.link_com_offset[i]));
    l["tip_offset"] = to_json(VecX(c.model.link_tip_offset[i]));
    links.push_back(l);
  }
  j["links"] = links;
  j["geometry"]["mount_offset"] = to_json(VecX(c.model.mount_offset));
  j["initial"]["r_b"] = to_json(VecX(c.initial.r_b));
  j["initial"]["eps"] = to_json(VecX(c.initial.eps));
  j["initial"]["q_deg"] = to_json(VecX(c.initial.q / kDegToRad));
  j["initial"]["qd_deg"] = to_json(VecX(c.initial.qd / kDegToRad));
  j["initial"]["v_b"] = to_json(VecX(c.initial.v_b));
  j["initial"]["w_b"] = to_json(VecX(c.initial.w_b));
  const auto &p = c.planner;
  J pj;
  pj["dt"] = p.dt;
  pj["horizon"] = p.horizon;
  pj["kappa"] = p.kappa;
  pj["q_max_deg"] = to_json(VecX(p.q_max / kDegToRad));
  pj["qd_max_deg"] = to_json(VecX(p.qd_max / kDegToRad));
  pj["qdd_max_deg"] = to_json(VecX(p.qdd_max / kDegToRad));
  pj["d_safe"] = p.d_safe;
  pj["r_th"] = p.r_th;
  pj["terminal_window_fraction"] = p.terminal_window_fraction;
  pj["base_box_margin"] = p.base_box_margin;
  pj["base_box_mode"] = detail::box_mode_name(p.base_box_mode);
  pj["candidates"] = p.candidate_count;
  pj["sweeps"] = p.refine_sweeps;
  pj["ee_speed_gain"] = p.ee_speed_gain;
  pj["ee_speed_max"] = p.ee_speed_max;
  pj["ee_decel"] = p.ee_decel;
  pj["continuity_weight"] = p.continuity_weight;
  pj["rate_weight"] = p.rate_weight;
  pj["kinematic_substeps"] = p.kinematic_substeps;
  j["planner"] = pj;
  J cj;
  cj["K_s"] = to_json(c.gains.K_s);
  cj["Gamma"] = to_json(c.gains.Gamma);
  cj["lambda"] = c.gains.lambda;
  cj["tau_max"] = to_json(c.gains.tau_max);
  cj["dt"] = c.gains.dt_ctrl;
  cj["probe_offset"] = to_json(c.probe_offset);
  j["controller"] = cj;
  J kj;
  kj["joint_error_max"] = c.checks.joint_error_max;
  kj["momentum_tol"] = c.checks.momentum_tol;
  kj["reaching_pass_rate"] = c.checks.reaching_pass_rate;
  kj["decay_rel_tol"] = c.checks.decay_rel_tol;
  kj["lyapunov_rate_tol"] = c.checks.lyapunov_rate_tol;
  j["checks"] = kj;
  return j;
}

namespace detail {

inline VecX vec_from_json(const nlohmann::ordered_json &j) {
  VecX v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

inline MatX mat_from_json(const nlohmann::ordered_json &j) {
  MatX m(j.size(), j.empty() ? 0 : j[0].size());
  for (std::size_t r = 0; r < j.size(); ++r)
    m.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r]).transpose();
  return m;
}

inline void put_array(std::ostringstream &os, const VecX &v) {
  os << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i)
    os << (i ? ", " : "") << v(i);
  os << "]";
}

} // namespace detail

/// Rebuilds a configuration from its echo by rendering the echo back to the
/// config schema, so the echo goes through the same validation as a file.
inline ScenarioConfig config_from_echo(const nlohmann::ordered_json &j) {
  using detail::put_array;
  using detail::vec_from_json;
  std::ostringstream os;
  os.precision(17);
  os << "case = " << nlohmann::json(j["case"].get<std::string>()).dump() << "\n";
  os << "seed = " << j["seed"].get<std::uint64_t>() << "\n";
  os << "output_dir = " << nlohmann::json(j["output_dir"].get<std::string>()).dump() << "\n";
  if (j.contains("r_d")) {
    os << "r_d = ";
    put_array(os, vec_from_json(j["r_d"]));
  } else {
    os << "r_d_offset = ";
    put_array(os, vec_from_json(j["r_d_offset"]));
  }
  os << "\n";
  auto put_matrix = [&](const nlohmann::ordered_json &m) {
    os << "[";
    for (std::size_t r = 0; r < m.size(); ++r) {
      os << (r ? ", " : "");
      put_array(os, vec_from_json(m[r]));
    }
    os << "]";
  };
  auto put_kv = [&](const nlohmann::ordered_json &obj) {
    for (const auto &[k, v] : obj.items()) {
      os << k << " = ";
      if (v.is_array() && !v.empty() && v[0].is_array())
        put_matrix(v);
      else if (v.is_array())
        put_array(os, vec_from_json(v));
      else if (v.is_string())
        os << nlohmann::json(v.get<std::string>()).dump();
      else if (v.is_number_integer())
        os << v.get<std::int64_t>();
      else
        os << v.get<double>();
      os << "\n";
    }
  };
  os << "[base]\n";
  put_kv(j["base"]);
  for (const auto &l : j["links"]) {
    os << "[[links]]\n";
    put_kv(l);
  }
  for (const char *section : {"geometry", "initial", "planner", "controller", "checks"}) {
    os << "[" << section << "]\n";
    put_kv(j[section]);
  }
  return parse_config(os.str(), "<echo>");
}

} // namespace sms

#endif // SMS_CONFIG_HPP
