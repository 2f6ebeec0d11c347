#ifndef SMS_CONTROL_HPP
#define SMS_CONTROL_HPP

#include "sms/common.hpp"
#include "sms/coupling.hpp"
#include "sms/dynamics.hpp"
#include "sms/kinematics.hpp"
#include "sms/model.hpp"
#include "sms/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace sms {

struct SmcGains {
  MatX Gamma;   ///< 1/s
  MatX K_s;     ///< N m
  double lambda = 0.02;
  VecX tau_max; ///< N m
  double dt_ctrl = 1e-3;

  void validate(int n) const {
    auto spd = [n](const MatX &m, const char *name) {
      if (m.rows() != n || m.cols() != n)
        throw ValidationError(std::string("controller.") + name, "must be n x n");
      if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
        throw ValidationError(std::string("controller.") + name, "must be symmetric");
      Eigen::SelfAdjointEigenSolver<MatX> es(m, Eigen::EigenvaluesOnly);
      if (!(es.eigenvalues().minCoeff() > 0.0))
        throw ValidationError(std::string("controller.") + name, "must be positive definite");
    };
    spd(Gamma, "Gamma");
    spd(K_s, "K_s");
    if (!(lambda > 0.0))
      throw ValidationError("controller.lambda", "must be > 0");
    if (tau_max.size() != n)
      throw ValidationError("controller.tau_max", "needs one entry per joint");
    if (!(tau_max.minCoeff() > 0.0))
      throw ValidationError("controller.tau_max", "entries must be > 0");
    if (!(dt_ctrl > 0.0))
      throw ValidationError("controller.dt", "must be > 0");
  }

  double gamma_min() const {
    Eigen::SelfAdjointEigenSolver<MatX> es(Gamma, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
};

namespace table2 {

inline SmcGains gains() {
  SmcGains g;
  g.Gamma = 10.0 * MatX::Identity(3, 3);
  g.K_s = 0.001 * MatX::Identity(3, 3);
  g.lambda = 0.02;
  g.tau_max = Vec3(3.5, 1.5, 1.5);
  g.dt_ctrl = 1e-3;
  return g;
}

inline PlannerConfig planner() {
  PlannerConfig c;
  c.dt = 0.05;
  c.horizon = 10.0;
  c.kappa = 10.0;
  c.q_max = Vec3(81.0, 162.0, 162.0) * kDegToRad;
  c.qd_max = VecX::Constant(3, 22.92 * kDegToRad);
  c.qdd_max = VecX::Constant(3, 28.65 * kDegToRad);
  c.d_safe = 0.01;
  c.r_th = 0.02;
  return c;
}

} // namespace table2

/// Joint-space dynamics with the unactuated base eliminated through zero
/// base wrench: H_q qdd + C_q = tau_q.
struct ReducedDynamics {
  MatX H_q;
  VecX C_q;
};

/// `coriolis_full` is the (6+n) vector C(u) u.
inline ReducedDynamics reduced_dynamics(const InertiaBlocks &b, const VecX &coriolis_full) {
  const Eigen::LDLT<Mat6> ldlt(b.base_block());
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1.0 / kConditionLimit))
    throw ConditioningError("base momentum block is ill-conditioned");
  const int n = b.dof();
  const Mat6X B = b.coupling_block();
  ReducedDynamics r;
  r.H_q = b.H_m - B.transpose() * ldlt.solve(B);
  r.H_q = (0.5 * (r.H_q + r.H_q.transpose())).eval();
  r.C_q = coriolis_full.tail(n) - B.transpose() * ldlt.solve(coriolis_full.head<6>());
  return r;
}

inline VecX sliding_surface(const VecX &q_e, const VecX &qd_e, const MatX &Gamma) {
  return qd_e + Gamma * q_e;
}

/// Component-wise sat(s_i / lambda).
inline VecX saturation(const VecX &s, double lambda) {
  return (s / lambda).cwiseMax(-1.0).cwiseMin(1.0);
}

struct JointReference {
  VecX q, qd, qdd;
};

/// Piecewise-cubic Hermite interpolant through the plan's joint nodes. Node
/// slopes are the mean of the rates applied on the adjoining intervals, so
/// the reference starts from the initial joint velocity. qdd is piecewise
/// linear.
class ReferenceTrajectory {
public:
  explicit ReferenceTrajectory(const TrajectoryPlan &plan) : h_(plan.dt) {
    if (plan.rows.size() < 2)
      throw ValidationError("plan", "needs at least two rows");
    const std::size_t m = plan.rows.size();
    nodes_.reserve(m);
    slopes_.reserve(m);
    VecX prev = plan.initial_qd;
    for (std::size_t k = 0; k < m; ++k) {
      nodes_.push_back(plan.rows[k].q);
      const VecX &cur = plan.rows[k].qd;
      slopes_.push_back(k == 0 ? prev : VecX(0.5 * (prev + cur)));
      prev = cur;
    }
  }

  double duration() const { return h_ * static_cast<double>(nodes_.size() - 1); }

  JointReference at(double t) const {
    const auto last = static_cast<int>(nodes_.size()) - 2;
    const int k = std::clamp(static_cast<int>(std::floor(t / h_)), 0, last);
    const double x = std::clamp((t - k * h_) / h_, 0.0, 1.0);
    const VecX &p0 = nodes_[k], &p1 = nodes_[k + 1];
    const VecX m0 = h_ * slopes_[k], m1 = h_ * slopes_[k + 1];
    const double x2 = x * x, x3 = x2 * x;
    JointReference r;
    r.q = (2 * x3 - 3 * x2 + 1) * p0 + (x3 - 2 * x2 + x) * m0 + (-2 * x3 + 3 * x2) * p1 +
          (x3 - x2) * m1;
    r.qd = ((6 * x2 - 6 * x) * p0 + (3 * x2 - 4 * x + 1) * m0 + (-6 * x2 + 6 * x) * p1 +
            (3 * x2 - 2 * x) * m1) /
           h_;
    r.qdd = ((12 * x - 6) * p0 + (6 * x - 4) * m0 + (-12 * x + 6) * p1 + (6 * x - 2) * m1) /
            (h_ * h_);
    return r;
  }

private:
  double h_;
  std::vector<VecX> nodes_;
  std::vector<VecX> slopes_;
};

struct ControlOutput {
  VecX tau;     ///< applied, after clamping
  VecX tau_raw; ///< before clamping
  std::vector<bool> clamped;
  VecX q_e, qd_e, s;
  ReducedDynamics reduced;

  bool any_clamped() const { return std::find(clamped.begin(), clamped.end(), true) != clamped.end(); }
};

/// tau_q = H_q (qdd_ref - Gamma qd_e) + C_q - K_s sat(s / lambda), clamped to
/// +-tau_max component-wise.
inline ControlOutput control_torque(const DynamicsTerms &terms, const SmsState &state,
                                    const JointReference &ref, const SmcGains &g) {
  ControlOutput out;
  out.reduced = reduced_dynamics(terms.blocks, terms.coriolis);
  out.q_e = state.q - ref.q;
  out.qd_e = state.qd - ref.qd;
  out.s = sliding_surface(out.q_e, out.qd_e, g.Gamma);
  out.tau_raw = out.reduced.H_q * (ref.qdd - g.Gamma * out.qd_e) + out.reduced.C_q -
                g.K_s * saturation(out.s, g.lambda);
  out.tau = out.tau_raw.cwiseMax(-g.tau_max).cwiseMin(g.tau_max);
  out.clamped.resize(out.tau.size());
  for (Eigen::Index i = 0; i < out.tau.size(); ++i)
    out.clamped[i] = out.tau(i) != out.tau_raw(i);
  return out;
}

inline ControlOutput control_torque(const SmsModel &model, const SmsState &state,
                                    const JointReference &ref, const SmcGains &g) {
  return control_torque(dynamics_terms(model, state), state, ref, g);
}

struct TrackingRow {
  double t = 0.0;
  VecX q_e, qd_e, s, tau;
  std::vector<bool> clamped;
  double ee_err = 0.0;
  double V_r = 0.0; ///< 1/2 s^T H_q s
  double V_s = 0.0; ///< 1/2 q_e^T q_e
  double hl_norm = 0.0;
  double ha_norm = 0.0;
  Vec3 r_b = Vec3::Zero();
  Vec4 eps = Vec4(0.0, 0.0, 0.0, 1.0);
  /// s^T H_q s_dot + s^T K_s sat(s / lambda) at the start of the step.
  double reaching_residual = 0.0;
};

struct TrackingLog {
  double dt = 0.0;
  Vec3 r_d = Vec3::Zero();
  std::vector<TrackingRow> rows;

  double max_joint_error() const {
    double m = 0.0;
    for (const auto &r : rows)
      m = std::max(m, r.q_e.norm());
    return m;
  }
  double final_ee_error() const { return rows.back().ee_err; }
  VecX max_abs_torque() const {
    VecX m = VecX::Zero(rows.front().tau.size());
    for (const auto &r : rows)
      m = m.cwiseMax(r.tau.cwiseAbs());
    return m;
  }
};

struct SimulationOptions {
  /// Initial joint offset from the reference.
  VecX initial_offset;
  /// Start the joint rates at -Gamma * offset relative to the reference,
  /// which places the state on the sliding surface; otherwise the rate
  /// offset is zero and the run starts in the reaching phase.
  bool start_on_surface = true;
};

/// Simulates the full free-floating dynamics under [0_6; tau_q] with a
/// zero-order hold over each control step, starting at rest relative to the
/// plan's initial state (plus the optional offset) with zero momentum.
inline TrackingLog closed_loop_simulate(const SmsModel &model, const TrajectoryPlan &plan,
                                        const SmcGains &g, const SimulationOptions &opt = {}) {
  const int n = model.dof();
  g.validate(n);
  if (g.dt_ctrl > plan.dt + 1e-15)
    throw ValidationError("controller.dt", "must not exceed the planning step");
  const ReferenceTrajectory ref(plan);

  SmsState x;
  x.r_b = plan.rows.front().r_b;
  x.eps = plan.rows.front().eps;
  x.q = plan.rows.front().q;
  x.qd = plan.initial_qd;
  if (opt.initial_offset.size() > 0) {
    if (opt.initial_offset.size() != n)
      throw ValidationError("controller.probe_offset", "needs one entry per joint");
    x.q += opt.initial_offset;
    if (opt.start_on_surface)
      x.qd -= g.Gamma * opt.initial_offset;
  }
  {
    const auto c = forward_kinematics(model, x);
    const Vec6 twist = coupling_matrix(inertia_blocks(model, c)) * x.qd;
    x.v_b = twist.head<3>();
    x.w_b = twist.tail<3>();
  }

  TrackingLog log;
  log.dt = g.dt_ctrl;
  log.r_d = plan.r_d;
  const auto steps = static_cast<long>(std::floor(ref.duration() / g.dt_ctrl + 1e-9));
  log.rows.reserve(steps + 1);
  for (long i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) * g.dt_ctrl;
    const JointReference r = ref.at(t);
    const DynamicsTerms terms = dynamics_terms(model, x);
    const ControlOutput u = control_torque(terms, x, r, g);

    TrackingRow row;
    row.t = t;
    row.q_e = u.q_e;
    row.qd_e = u.qd_e;
    row.s = u.s;
    row.tau = u.tau;
    row.clamped = u.clamped;
    row.ee_err = (plan.r_d - terms.cache.r_e).norm();
    row.V_r = 0.5 * u.s.dot(u.reduced.H_q * u.s);
    row.V_s = 0.5 * u.q_e.squaredNorm();
    const Momentum h = momentum(model, x);
    row.hl_norm = h.linear.norm();
    row.ha_norm = h.angular.norm();
    row.r_b = x.r_b;
    row.eps = x.eps;
    const VecX acc = forward_dynamics(terms, joint_only_force(u.tau));
    const VecX s_dot = acc.tail(n) - r.qdd + g.Gamma * u.qd_e;
    row.reaching_residual =
        u.s.dot(u.reduced.H_q * s_dot) + u.s.dot(g.K_s * saturation(u.s, g.lambda));
    log.rows.push_back(std::move(row));

    if (u.q_e.norm() > 1.0)
      throw ControllerDivergenceError("joint tracking error exceeded 1 rad at t=" + std::to_string(t));
    if (i < steps)
      x = integrate_step(model, x, joint_only_force(u.tau), g.dt_ctrl);
  }
  return log;
}

struct LyapunovReport {
  // Reaching phase: steps with max |s_i| > lambda and no torque clamp.
  long reaching_steps = 0;
  long reaching_violations = 0; ///< Delta V_r / dt above tolerance
  double reaching_pass_rate = 1.0;
  double max_reaching_rate = 0.0; ///< largest Delta V_r / dt observed there

  // Sliding phase: runs where the state hugs the surface.
  int sliding_segments = 0;
  long sliding_samples = 0;
  double fitted_decay_rate = 0.0; ///< -d ln V_s / dt, least squares
  double predicted_decay_rate = 0.0;
  double decay_rel_error = 0.0;

  bool reaching_ok(double min_rate = 0.99) const {
    return reaching_steps == 0 || reaching_pass_rate >= min_rate;
  }
  bool sliding_ok(double rel_tol = 0.2) const {
    return sliding_segments > 0 && decay_rel_error <= rel_tol;
  }
};

struct LyapunovOptions {
  double rate_tolerance = 1e-8;
  double sliding_fraction = 0.1;   ///< ||s|| < fraction * lambda
  double sliding_ratio = 0.1;      ///< ||s|| <= ratio * gamma_min * ||q_e||
  double min_V_s = 1e-12;
  int min_segment_length = 10;
};

/// Discrete check of the reaching condition and of the sliding-phase decay
/// V_s(t) ~ exp(-2 gamma_min t). A sliding sample needs ||s|| small both
/// absolutely and relative to Gamma q_e, so that qd_e ~ -Gamma q_e governs
/// V_s rather than the residual s.
inline LyapunovReport lyapunov_check(const TrackingLog &log, const SmcGains &g,
                                     const LyapunovOptions &opt = {}) {
  LyapunovReport rep;
  const double dt = log.dt;
  const auto &rows = log.rows;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto &r = rows[i];
    if (!(r.s.cwiseAbs().maxCoeff() > g.lambda))
      continue;
    if (std::find(r.clamped.begin(), r.clamped.end(), true) != r.clamped.end())
      continue;
    ++rep.reaching_steps;
    const double rate = (rows[i + 1].V_r - r.V_r) / dt;
    rep.max_reaching_rate = rep.reaching_steps == 1 ? rate : std::max(rep.max_reaching_rate, rate);
    if (rate > opt.rate_tolerance)
      ++rep.reaching_violations;
  }
  if (rep.reaching_steps > 0)
    rep.reaching_pass_rate =
        1.0 - static_cast<double>(rep.reaching_violations) / static_cast<double>(rep.reaching_steps);

  const double gamma_min = g.gamma_min();
  rep.predicted_decay_rate = 2.0 * gamma_min;
  auto on_surface = [&](const TrackingRow &r) {
    const double sn = r.s.norm();
    return sn < opt.sliding_fraction * g.lambda &&
           sn <= opt.sliding_ratio * gamma_min * r.q_e.norm() && r.V_s > opt.min_V_s;
  };
  // Pooled least squares of ln V_s against t, with a separate intercept per segment.
  double sxy = 0.0, sxx = 0.0;
  std::size_t i = 0;
  while (i < rows.size()) {
    if (!on_surface(rows[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < rows.size() && on_surface(rows[j]))
      ++j;
    const auto len = static_cast<long>(j - i);
    if (len >= opt.min_segment_length) {
      double mt = 0.0, my = 0.0;
      for (std::size_t k = i; k < j; ++k) {
        mt += rows[k].t;
        my += std::log(rows[k].V_s);
      }
      mt /= len;
      my /= len;
      for (std::size_t k = i; k < j; ++k) {
        const double dx = rows[k].t - mt;
        sxy += dx * (std::log(rows[k].V_s) - my);
        sxx += dx * dx;
      }
      ++rep.sliding_segments;
      rep.sliding_samples += len;
    }
    i = j;
  }
  if (rep.sliding_segments > 0 && sxx > 0.0) {
    rep.fitted_decay_rate = -sxy / sxx;
    rep.decay_rel_error =
        std::abs(rep.fitted_decay_rate - rep.predicted_decay_rate) / rep.predicted_decay_rate;
  }
  return rep;
}

} // namespace sms

#endif // SMS_CONTROL_HPP
