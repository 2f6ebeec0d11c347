#ifndef SMS_SCENARIO_HPP
#define SMS_SCENARIO_HPP

#include "sms/common.hpp"
#include "sms/config.hpp"
#include "sms/control.hpp"
#include "sms/planner.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace sms {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string short_fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

inline std::string numbered(const std::string &stem, int n) {
  std::string s;
  for (int i = 1; i <= n; ++i)
    s += (i > 1 ? "," : "") + stem + std::to_string(i);
  return s;
}

class CsvWriter {
public:
  CsvWriter(const fs::path &path, const std::string &header) : path_(path), out_(path) {
    if (!out_)
      throw Error("cannot write " + path.string());
    out_ << header << '\n';
  }

  CsvWriter &operator<<(double x) {
    sep();
    out_ << fmt(x);
    return *this;
  }
  CsvWriter &operator<<(const VecX &v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      *this << v(i);
    return *this;
  }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }
  void close() {
    out_.close();
    if (!out_)
      throw Error("I/O error writing " + path_.string());
  }

private:
  void sep() {
    if (!first_)
      out_ << ',';
    first_ = false;
  }
  fs::path path_;
  std::ofstream out_;
  bool first_ = true;
};

} // namespace detail

inline std::string plan_csv_header(int n) {
  using detail::numbered;
  return "t," + numbered("q", n) + "," + numbered("qd", n) + "," + numbered("qdd", n) +
         ",rbx,rby,rbz,e1,e2,e3,e4,vbx,vby,vbz,wbx,wby,wbz,rex,rey,rez,Hnorm,cos_theta_a,Ctilde,"
         "step_cost," +
         numbered("alpha", n);
}

inline std::string tracking_csv_header(int n) {
  using detail::numbered;
  return "t," + numbered("qe", n) + "," + numbered("qde", n) + "," + numbered("s", n) + "," +
         numbered("tau", n) + "," + numbered("clamp", n) + ",ee_err,Vr,Vs,hl_norm,ha_norm";
}

inline const char *constraints_csv_header() {
  return "k,t,joint_position,joint_velocity,joint_acceleration,pairwise_clearance,base_box,terminal,"
         "feasible";
}

inline void write_plan_csv(const TrajectoryPlan &plan, const fs::path &path) {
  const int n = static_cast<int>(plan.rows.front().q.size());
  detail::CsvWriter w(path, plan_csv_header(n));
  for (const auto &r : plan.rows) {
    w << r.t << r.q << r.qd << r.qdd << VecX(r.r_b) << VecX(r.eps) << VecX(r.v_b) << VecX(r.w_b)
      << VecX(r.r_e) << r.H_norm << r.cos_theta_a << r.C_tilde << r.step_cost << r.alpha;
    w.end_row();
  }
  w.close();
}

/// Worst margin per constraint family at every plan row; a non-evaluated
/// family (the terminal bound before its window) is written as nan.
inline void write_constraints_csv(const TrajectoryPlan &plan, const fs::path &path) {
  detail::CsvWriter w(path, constraints_csv_header());
  for (std::size_t k = 0; k < plan.reports.size(); ++k) {
    w << static_cast<double>(k) << plan.rows[k].t;
    for (const auto &f : plan.reports[k].families)
      w << (f.evaluated ? f.worst_margin : std::nan(""));
    w << (plan.reports[k].feasible() ? 1.0 : 0.0);
    w.end_row();
  }
  w.close();
}

inline void write_tracking_csv(const TrackingLog &log, const fs::path &path) {
  const int n = static_cast<int>(log.rows.front().q_e.size());
  detail::CsvWriter w(path, tracking_csv_header(n));
  for (const auto &r : log.rows) {
    w << r.t << r.q_e << r.qd_e << r.s << r.tau;
    for (bool c : r.clamped)
      w << (c ? 1.0 : 0.0);
    w << r.ee_err << r.V_r << r.V_s << r.hl_norm << r.ha_norm;
    w.end_row();
  }
  w.close();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int col(const std::string &name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name)
        return static_cast<int>(i);
    throw Error("CSV has no column " + name);
  }
  double at(std::size_t row, const std::string &name) const { return rows[row][col(name)]; }
  /// Values of columns stem1..stemn in one row.
  VecX group(std::size_t row, const std::string &stem, int n) const {
    VecX v(n);
    for (int i = 0; i < n; ++i)
      v(i) = rows[row][col(stem + std::to_string(i + 1))];
    return v;
  }
  /// Number of columns named stem1, stem2, ...
  int count(const std::string &stem) const {
    int n = 0;
    while (std::find(header.begin(), header.end(), stem + std::to_string(n + 1)) != header.end())
      ++n;
    return n;
  }
};

inline CsvTable read_csv(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string &s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ','))
      out.push_back(cell);
    return out;
  };
  if (!std::getline(in, line))
    throw Error("empty CSV " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw Error("ragged row in " + path.string());
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
      row[i] = std::strtod(cells[i].c_str(), nullptr);
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Rebuilds the logged fields of a tracking run from its CSV.
inline TrackingLog read_tracking_csv(const fs::path &path, double dt) {
  const CsvTable t = read_csv(path);
  const int n = t.count("qe");
  TrackingLog log;
  log.dt = dt;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    TrackingRow r;
    r.t = t.at(i, "t");
    r.q_e = t.group(i, "qe", n);
    r.qd_e = t.group(i, "qde", n);
    r.s = t.group(i, "s", n);
    r.tau = t.group(i, "tau", n);
    const VecX c = t.group(i, "clamp", n);
    for (int j = 0; j < n; ++j)
      r.clamped.push_back(c(j) != 0.0);
    r.ee_err = t.at(i, "ee_err");
    r.V_r = t.at(i, "Vr");
    r.V_s = t.at(i, "Vs");
    r.hl_norm = t.at(i, "hl_norm");
    r.ha_norm = t.at(i, "ha_norm");
    log.rows.push_back(std::move(r));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Summary

enum class Stage { plan, track, run };

inline const char *stage_name(Stage s) {
  switch (s) {
  case Stage::plan:
    return "plan";
  case Stage::track:
    return "track";
  default:
    return "run";
  }
}

inline Stage parse_stage(const std::string &s) {
  if (s == "plan")
    return Stage::plan;
  if (s == "track")
    return Stage::track;
  if (s == "run")
    return Stage::run;
  throw Error("unknown stage " + s);
}

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double limit = 0.0;
};

struct RunSummary {
  Stage stage = Stage::run;
  // plan
  bool plan_feasible = false;
  long plan_rows = 0;
  double plan_total_cost = 0.0;
  double max_base_displacement = 0.0;
  double plan_terminal_max_error = 0.0;
  double plan_final_ee_error = 0.0;
  // tracking
  double final_ee_error = 0.0;
  double max_joint_error = 0.0;
  VecX max_abs_torque;
  double max_hl_norm = 0.0;
  double max_ha_norm = 0.0;
  long clamped_steps = 0;
  // Lyapunov
  LyapunovReport nominal;
  LyapunovReport probe;

  std::vector<CheckResult> checks;

  bool all_passed() const {
    return !checks.empty() &&
           std::all_of(checks.begin(), checks.end(), [](const auto &c) { return c.passed; });
  }
};

/// Every number is derived from the CSV files in `dir` plus the configuration.
inline RunSummary compute_summary(const fs::path &dir, const ScenarioConfig &cfg, const Vec3 &r_d,
                                  Stage stage) {
  RunSummary s;
  s.stage = stage;
  auto check = [&](const std::string &name, bool ok, double value, double limit) {
    s.checks.push_back({name, ok, value, limit});
  };

  const CsvTable plan = read_csv(dir / "plan.csv");
  const CsvTable cons = read_csv(dir / "constraints.csv");
  s.plan_rows = static_cast<long>(plan.rows.size());
  s.plan_feasible = !cons.rows.empty();
  for (std::size_t k = 0; k < cons.rows.size(); ++k)
    s.plan_feasible = s.plan_feasible && cons.at(k, "feasible") == 1.0;
  const Vec3 rb0(plan.at(0, "rbx"), plan.at(0, "rby"), plan.at(0, "rbz"));
  const int k_term = cfg.planner.terminal_start();
  for (std::size_t k = 0; k < plan.rows.size(); ++k) {
    if (k >= 1)
      s.plan_total_cost += plan.at(k, "step_cost");
    const Vec3 rb(plan.at(k, "rbx"), plan.at(k, "rby"), plan.at(k, "rbz"));
    s.max_base_displacement = std::max(s.max_base_displacement, (rb - rb0).norm());
    const Vec3 re(plan.at(k, "rex"), plan.at(k, "rey"), plan.at(k, "rez"));
    const double err = (r_d - re).norm();
    if (static_cast<int>(k) >= k_term)
      s.plan_terminal_max_error = std::max(s.plan_terminal_max_error, err);
    s.plan_final_ee_error = err;
  }
  check("plan_feasible", s.plan_feasible, s.plan_feasible ? 1.0 : 0.0, 1.0);
  check("plan_terminal_error", s.plan_terminal_max_error <= cfg.planner.r_th,
        s.plan_terminal_max_error, cfg.planner.r_th);
  if (stage == Stage::plan)
    return s;

  const TrackingLog log = read_tracking_csv(dir / "tracking.csv", cfg.gains.dt_ctrl);
  s.final_ee_error = log.final_ee_error();
  s.max_joint_error = log.max_joint_error();
  s.max_abs_torque = log.max_abs_torque();
  for (const auto &r : log.rows) {
    s.max_hl_norm = std::max(s.max_hl_norm, r.hl_norm);
    s.max_ha_norm = std::max(s.max_ha_norm, r.ha_norm);
    if (std::find(r.clamped.begin(), r.clamped.end(), true) != r.clamped.end())
      ++s.clamped_steps;
  }
  check("tracking_joint_error", s.max_joint_error < cfg.checks.joint_error_max, s.max_joint_error,
        cfg.checks.joint_error_max);
  const double torque_ratio = (s.max_abs_torque.array() / cfg.gains.tau_max.array()).maxCoeff();
  check("torque_limits", torque_ratio <= 1.0, torque_ratio, 1.0);
  check("final_ee_error", s.final_ee_error <= cfg.planner.r_th, s.final_ee_error, cfg.planner.r_th);
  const double mom = std::max(s.max_hl_norm, s.max_ha_norm);
  check("momentum_residual", mom <= cfg.checks.momentum_tol, mom, cfg.checks.momentum_tol);
  if (stage == Stage::track)
    return s;

  LyapunovOptions lo;
  lo.rate_tolerance = cfg.checks.lyapunov_rate_tol;
  s.nominal = lyapunov_check(log, cfg.gains, lo);
  check("lyapunov_reaching", s.nominal.reaching_ok(cfg.checks.reaching_pass_rate),
        s.nominal.reaching_pass_rate, cfg.checks.reaching_pass_rate);
  const TrackingLog probe = read_tracking_csv(dir / "probe_tracking.csv", cfg.gains.dt_ctrl);
  s.probe = lyapunov_check(probe, cfg.gains, lo);
  check("lyapunov_sliding_decay", s.probe.sliding_ok(cfg.checks.decay_rel_tol),
        s.probe.decay_rel_error, cfg.checks.decay_rel_tol);
  return s;
}

inline nlohmann::ordered_json to_json(const LyapunovReport &r) {
  nlohmann::ordered_json j;
  j["reaching_steps"] = r.reaching_steps;
  j["reaching_violations"] = r.reaching_violations;
  j["reaching_pass_rate"] = r.reaching_pass_rate;
  j["max_reaching_rate"] = r.max_reaching_rate;
  j["sliding_segments"] = r.sliding_segments;
  j["sliding_samples"] = r.sliding_samples;
  j["fitted_decay_rate"] = r.fitted_decay_rate;
  j["predicted_decay_rate"] = r.predicted_decay_rate;
  j["decay_rel_error"] = r.decay_rel_error;
  return j;
}

inline nlohmann::ordered_json to_json(const RunSummary &s) {
  nlohmann::ordered_json j;
  j["stage"] = stage_name(s.stage);
  j["plan_feasible"] = s.plan_feasible;
  j["plan_rows"] = s.plan_rows;
  j["plan_total_cost"] = s.plan_total_cost;
  j["max_base_displacement"] = s.max_base_displacement;
  j["plan_terminal_max_error"] = s.plan_terminal_max_error;
  j["plan_final_ee_error"] = s.plan_final_ee_error;
  if (s.stage != Stage::plan) {
    j["final_ee_error"] = s.final_ee_error;
    j["max_joint_error"] = s.max_joint_error;
    j["max_abs_torque"] = detail::to_json(s.max_abs_torque);
    j["max_hl_norm"] = s.max_hl_norm;
    j["max_ha_norm"] = s.max_ha_norm;
    j["clamped_steps"] = s.clamped_steps;
  }
  if (s.stage == Stage::run) {
    j["lyapunov_nominal"] = to_json(s.nominal);
    j["lyapunov_probe"] = to_json(s.probe);
  }
  auto checks = nlohmann::ordered_json::array();
  for (const auto &c : s.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"limit", c.limit}});
  j["checks"] = checks;
  j["all_passed"] = s.all_passed();
  return j;
}

// ---------------------------------------------------------------------------
// Scenario execution

enum ExitCode : int {
  kExitOk = 0,
  kExitChecksFailed = 1,
  kExitInfeasible = 2,
  kExitDivergence = 3,
  kExitConfig = 4,
  kExitError = 5,
};

inline void write_json(const nlohmann::ordered_json &j, const fs::path &path) {
  std::ofstream out(path);
  if (!out)
    throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out)
    throw Error("I/O error writing " + path.string());
}

/// Plans, optionally tracks and verifies one scenario, writing every artifact
/// to `dir`. Returns the process exit code.
inline int run_scenario(const ScenarioConfig &cfg, Stage stage, const fs::path &dir,
                        std::ostream &out) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  const Vec3 r_d = cfg.r_d();

  nlohmann::ordered_json manifest;
  manifest["case"] = cfg.case_label;
  manifest["stage"] = stage_name(stage);
  manifest["seed"] = cfg.seed;
  manifest["r_d"] = detail::to_json(VecX(r_d));
  manifest["initial_system_com"] =
      detail::to_json(VecX(system_com(cfg.model, forward_kinematics(cfg.model, cfg.initial))));
  auto finish = [&](const std::string &status, int code) {
    manifest["status"] = status;
    manifest["exit_code"] = code;
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest["config"] = config_echo(cfg);
    write_json(manifest, dir / "manifest.json");
    return code;
  };

  TrajectoryPlan plan;
  try {
    plan = plan_trajectory(cfg.model, cfg.initial, r_d, cfg.planner);
  } catch (const InfeasibleStepError &e) {
    std::ofstream(dir / "diagnostics.txt") << e.what();
    out << "[" << cfg.case_label << "] infeasible plan\n" << e.what();
    manifest["error"] = e.what();
    nlohmann::ordered_json viol = nlohmann::ordered_json::array();
    for (const auto &f : e.report().families)
      if (f.evaluated && !f.passed)
        viol.push_back({{"constraint", f.name}, {"margin", f.worst_margin}, {"where", f.where}});
    manifest["violations"] = viol;
    manifest["failed_step"] = e.step();
    return finish("infeasible", kExitInfeasible);
  }
  write_plan_csv(plan, dir / "plan.csv");
  write_constraints_csv(plan, dir / "constraints.csv");
  if (!plan.feasible)
    std::ofstream(dir / "diagnostics.txt") << plan.diagnostics;

  if (stage != Stage::plan) {
    try {
      write_tracking_csv(closed_loop_simulate(cfg.model, plan, cfg.gains), dir / "tracking.csv");
      if (stage == Stage::run) {
        SimulationOptions probe;
        probe.initial_offset = cfg.probe_offset;
        write_tracking_csv(closed_loop_simulate(cfg.model, plan, cfg.gains, probe),
                           dir / "probe_tracking.csv");
      }
    } catch (const ControllerDivergenceError &e) {
      out << "[" << cfg.case_label << "] " << e.what() << "\n";
      manifest["error"] = e.what();
      return finish("diverged", kExitDivergence);
    }
  }

  const RunSummary summary = compute_summary(dir, cfg, r_d, stage);
  manifest["summary"] = to_json(summary);
  for (const auto &c : summary.checks)
    out << "[" << cfg.case_label << "] " << (c.passed ? "PASS " : "FAIL ") << c.name << " value="
        << detail::short_fmt(c.value) << " limit=" << detail::short_fmt(c.limit) << "\n";
  const int code = summary.all_passed() ? kExitOk : kExitChecksFailed;
  return finish(summary.all_passed() ? "passed" : "checks_failed", code);
}

inline nlohmann::ordered_json read_json(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot read " + path.string());
  return nlohmann::ordered_json::parse(in);
}

/// Recomputes the summary of a finished run from its CSVs and the config
/// echo, and compares it with the stored manifest.
inline int verify_run(const fs::path &dir, std::ostream &out) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("status", "") == "infeasible" || manifest.value("status", "") == "diverged") {
    out << "run did not complete: " << manifest.value("status", "") << "\n";
    return manifest.value("exit_code", static_cast<int>(kExitError));
  }
  const ScenarioConfig cfg = config_from_echo(manifest.at("config"));
  const Vec3 r_d(detail::vec_from_json(manifest.at("config").at("r_d_resolved")));
  const Stage stage = parse_stage(manifest.at("stage").get<std::string>());
  const RunSummary s = compute_summary(dir, cfg, r_d, stage);
  const auto recomputed = to_json(s);
  const bool match = recomputed == manifest.at("summary");
  for (const auto &c : s.checks)
    out << (c.passed ? "PASS " : "FAIL ") << c.name << " value=" << detail::short_fmt(c.value)
        << " limit=" << detail::short_fmt(c.limit) << "\n";
  out << (match ? "summary matches manifest\n" : "summary DIFFERS from manifest\n");
  return match && s.all_passed() ? kExitOk : kExitChecksFailed;
}

} // namespace sms

#endif // SMS_SCENARIO_HPP
