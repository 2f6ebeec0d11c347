#ifndef SMS_PLANNER_HPP
#define SMS_PLANNER_HPP

#include "sms/common.hpp"
#include "sms/coupling.hpp"
#include "sms/dynamics.hpp"
#include "sms/kinematics.hpp"
#include "sms/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace sms {

enum class BaseBoxMode {
  outside,     ///< a point is clear if it lies outside the box along at least one axis
  literal_and, ///< every axis inequality must hold simultaneously
};

struct PlannerConfig {
  double dt = 0.05;
  double horizon = 10.0;
  double kappa = 10.0;
  VecX q_max;
  VecX qd_max;
  VecX qdd_max;
  double d_safe = 0.01;
  double r_th = 0.02;
  double terminal_window_fraction = 0.1;
  double base_box_margin = 0.005;
  BaseBoxMode base_box_mode = BaseBoxMode::outside;
  int candidate_count = 200;
  int refine_sweeps = 3;
  std::uint64_t seed = 1;

  // Secondary objective, used only to break ties between directions of equal
  // coupling cost (the cost depends on the direction of qd alone).
  double ee_speed_gain = 1.0; ///< 1/s
  double ee_speed_max = 0.15; ///< m/s
  double ee_decel = 0.08;     ///< m/s^2, braking profile toward the goal
  double continuity_weight = 0.01; ///< m^2, weight on |qd - qd_prev|^2
  double rate_weight = 1e-3;       ///< m^2, weight on |qd|^2

  int kinematic_substeps = 10;

  int steps() const { return static_cast<int>(std::lround(horizon / dt)); }

  /// First grid index of the terminal window.
  int terminal_start() const {
    return static_cast<int>(std::ceil((1.0 - terminal_window_fraction) * steps() - 1e-9));
  }

  void validate(int n) const {
    auto positive_vec = [n](const VecX &v, const char *name) {
      if (v.size() != n)
        throw ValidationError(std::string("planner.") + name, "needs one entry per joint");
      if (!(v.minCoeff() > 0.0))
        throw ValidationError(std::string("planner.") + name, "entries must be > 0");
    };
    positive_vec(q_max, "q_max");
    positive_vec(qd_max, "qd_max");
    positive_vec(qdd_max, "qdd_max");
    if (!(dt > 0.0))
      throw ValidationError("planner.dt", "must be > 0");
    if (!(horizon > 0.0) || steps() < 1)
      throw ValidationError("planner.horizon", "must span at least one step");
    if (!(kappa > 0.0))
      throw ValidationError("planner.kappa", "must be > 0");
    if (!(d_safe > 0.0))
      throw ValidationError("planner.d_safe", "must be > 0");
    if (!(r_th > 0.0))
      throw ValidationError("planner.r_th", "must be > 0");
    if (!(terminal_window_fraction > 0.0 && terminal_window_fraction < 1.0))
      throw ValidationError("planner.terminal_window_fraction", "must lie in (0, 1)");
    if (base_box_margin < 0.0)
      throw ValidationError("planner.base_box_margin", "must be >= 0");
    if (candidate_count < 1)
      throw ValidationError("planner.candidates", "must be >= 1");
    if (refine_sweeps < 0)
      throw ValidationError("planner.sweeps", "must be >= 0");
    if (!(ee_speed_gain > 0.0))
      throw ValidationError("planner.ee_speed_gain", "must be > 0");
    if (!(ee_speed_max > 0.0))
      throw ValidationError("planner.ee_speed_max", "must be > 0");
    if (!(ee_decel > 0.0))
      throw ValidationError("planner.ee_decel", "must be > 0");
    if (continuity_weight < 0.0)
      throw ValidationError("planner.continuity_weight", "must be >= 0");
    if (rate_weight < 0.0)
      throw ValidationError("planner.rate_weight", "must be >= 0");
    if (kinematic_substeps < 1)
      throw ValidationError("planner.kinematic_substeps", "must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Collision geometry

struct CheckPoint {
  std::string label;
  Vec3 position;
};

/// Joints, link midpoints and the end-effector, ordered along the chain:
/// joint1, mid1, joint2, mid2, ..., jointn, midn, ee.
inline std::vector<CheckPoint> collision_points(const KinematicsCache &c,
                                                const SmsModel &model) {
  const int n = c.dof();
  std::vector<CheckPoint> pts;
  pts.reserve(2 * n + 1);
  for (int i = 0; i < n; ++i) {
    pts.push_back({"joint" + std::to_string(i + 1), c.p[i]});
    pts.push_back({"mid" + std::to_string(i + 1),
                   c.p[i] + 0.5 * (c.R[i] * model.link_tip_offset[i])});
  }
  pts.push_back({"ee", c.r_e});
  return pts;
}

namespace detail {

// Point 2i is joint i+1 (shared by links i-1 and i), point 2i+1 is the
// midpoint of link i, the last point is the tip of link n-1.
inline bool same_link(int a, int b) {
  auto lo = [](int p) { return p % 2 == 0 ? p / 2 - 1 : p / 2; };
  auto hi = [](int p) { return p / 2; };
  return std::max(lo(a), lo(b)) <= std::min(hi(a), hi(b));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Constraint reporting

struct ConstraintResult {
  explicit ConstraintResult(std::string family = {}) : name(std::move(family)) {}

  std::string name;
  bool evaluated = true;
  bool passed = true;
  double worst_margin = std::numeric_limits<double>::infinity(); ///< > 0 means satisfied
  std::string where;
};

struct ConstraintReport {
  std::vector<ConstraintResult> families;

  bool feasible() const {
    return std::all_of(families.begin(), families.end(),
                       [](const auto &f) { return !f.evaluated || f.passed; });
  }

  const ConstraintResult &family(const std::string &name) const {
    for (const auto &f : families)
      if (f.name == name)
        return f;
    throw std::out_of_range("no constraint family " + name);
  }

  std::string summary() const {
    std::ostringstream os;
    for (const auto &f : families) {
      if (!f.evaluated)
        continue;
      os << f.name << ": " << (f.passed ? "ok" : "VIOLATED") << " (margin " << f.worst_margin;
      if (!f.where.empty())
        os << " at " << f.where;
      os << ")\n";
    }
    return os.str();
  }
};

/// Everything needed to evaluate the constraint set at one grid point.
struct StepSample {
  int k = 0;
  VecX q;
  VecX qd;
  VecX qd_prev;
  Vec3 r_b = Vec3::Zero();
  Mat3 R_b = Mat3::Identity();
  Vec3 r_e = Vec3::Zero();
  Vec3 r_d = Vec3::Zero();
  std::vector<CheckPoint> points;
};

inline ConstraintResult pairwise_clearance(const std::vector<CheckPoint> &pts, double d_safe) {
  ConstraintResult r{"pairwise_clearance"};
  const int m = static_cast<int>(pts.size());
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) {
      if (detail::same_link(a, b))
        continue;
      const double margin = (pts[a].position - pts[b].position).norm() - d_safe;
      if (margin < r.worst_margin) {
        r.worst_margin = margin;
        r.where = pts[a].label + "-" + pts[b].label;
      }
    }
  r.passed = r.worst_margin >= 0.0;
  return r;
}

inline ConstraintResult base_box_clearance(const std::vector<CheckPoint> &pts, const Vec3 &r_b,
                                           const Mat3 &R_b, const Vec3 &dims, double margin,
                                           BaseBoxMode mode) {
  ConstraintResult r{"base_box"};
  const Vec3 half = 0.5 * dims;
  // The first point is joint 1, which sits on the base face by construction.
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec3 f = R_b.transpose() * (pts[i].position - r_b);
    const Vec3 excess = f.cwiseAbs() - half;
    const double m =
        mode == BaseBoxMode::outside ? excess.maxCoeff() - margin : excess.minCoeff();
    if (m < r.worst_margin) {
      r.worst_margin = m;
      r.where = pts[i].label;
    }
  }
  r.passed = r.worst_margin > 0.0;
  return r;
}

inline ConstraintReport check_constraints(const StepSample &s, const PlannerConfig &cfg,
                                          const Vec3 &base_dims) {
  ConstraintReport rep;
  const int n = static_cast<int>(s.q.size());
  auto bound_family = [n](const char *name, const VecX &value, const VecX &limit) {
    ConstraintResult r{name};
    for (int i = 0; i < n; ++i) {
      const double m = limit(i) - std::abs(value(i));
      if (m < r.worst_margin) {
        r.worst_margin = m;
        r.where = "joint" + std::to_string(i + 1);
      }
    }
    r.passed = r.worst_margin >= 0.0;
    return r;
  };
  rep.families.push_back(bound_family("joint_position", s.q, cfg.q_max));
  rep.families.push_back(bound_family("joint_velocity", s.qd, cfg.qd_max));
  rep.families.push_back(bound_family("joint_acceleration", (s.qd - s.qd_prev) / cfg.dt, cfg.qdd_max));
  rep.families.push_back(pairwise_clearance(s.points, cfg.d_safe));
  rep.families.push_back(base_box_clearance(s.points, s.r_b, s.R_b, base_dims, cfg.base_box_margin,
                                            cfg.base_box_mode));
  ConstraintResult term{"terminal"};
  term.evaluated = s.k >= cfg.terminal_start();
  if (term.evaluated) {
    term.worst_margin = cfg.r_th - (s.r_d - s.r_e).norm();
    term.passed = term.worst_margin >= 0.0;
    term.where = "ee";
  }
  rep.families.push_back(term);
  return rep;
}

class InfeasibleStepError : public Error {
public:
  InfeasibleStepError(int step, ConstraintReport report, const std::string &why)
      : Error("no feasible step at k=" + std::to_string(step) + ": " + why + "\n" + report.summary()),
        step_(step), report_(std::move(report)) {}

  int step() const noexcept { return step_; }
  const ConstraintReport &report() const noexcept { return report_; }

private:
  int step_;
  ConstraintReport report_;
};

// ---------------------------------------------------------------------------
// Cost

inline double step_cost(double C_tilde, double H_norm) {
  const double r = C_tilde - (1.0 - H_norm);
  return r * r;
}

/// (C~ - (1 - H_norm))^2 for the joint direction V alpha.
inline double step_cost(const VecX &alpha, const CouplingAnalysis &a, const Vec3 &r_e,
                        const Vec3 &r_d, double kappa) {
  const VecX qd = coupled_joint_velocity(alpha, a.svd.V);
  const AssistMetric m = assist_metric(qd, a.jacobian.J_star, r_e, r_d, kappa);
  return step_cost(m.C_tilde, a.svd.H_norm);
}

// ---------------------------------------------------------------------------
// Kinematic propagation under momentum conservation

struct BasePose {
  Vec3 r_b = Vec3::Zero();
  Vec4 eps = Vec4(0.0, 0.0, 0.0, 1.0);
  VecX q;
};

/// Integrates (r_b, eps, q) over dt with constant joint rates; the base
/// twist is C_bm(config) qd at every instant (zero total momentum).
inline BasePose propagate_kinematics(const SmsModel &model, const BasePose &start, const VecX &qd,
                                     double dt, int substeps) {
  const int n = model.dof();
  auto f = [&](const VecX &y) {
    const Vec4 eps = y.segment<4>(3);
    const Mat3 R_b = rotation_from_quat(eps);
    const auto c = forward_kinematics(model, y.head<3>(), R_b, y.tail(n));
    const Vec6 twist = coupling_matrix(inertia_blocks(model, c)) * qd;
    VecX dy(7 + n);
    dy << twist.head<3>(), 0.5 * quat_G(eps) * (R_b.transpose() * twist.tail<3>()), qd;
    return dy;
  };
  VecX y(7 + n);
  y << start.r_b, start.eps, start.q;
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) {
    const VecX k1 = f(y);
    const VecX k2 = f(y + 0.5 * h * k1);
    const VecX k3 = f(y + 0.5 * h * k2);
    const VecX k4 = f(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  BasePose out;
  out.r_b = y.head<3>();
  out.eps = y.segment<4>(3).normalized();
  out.q = start.q + dt * qd; // exact for constant rates
  return out;
}

// ---------------------------------------------------------------------------
// Per-step optimization

/// Box of joint rates admissible at one step: velocity and acceleration
/// limits, the joint-position limit after one step, and a braking envelope
/// that keeps the position limit reachable with the acceleration limit.
struct VelocityBox {
  VecX lo;
  VecX hi;

  bool empty() const { return (lo.array() > hi.array()).any(); }
  VecX clamp(const VecX &v) const { return v.cwiseMax(lo).cwiseMin(hi); }
  bool contains(const VecX &v) const {
    return (v.array() >= lo.array()).all() && (v.array() <= hi.array()).all();
  }
};

inline VelocityBox feasible_velocity_box(const VecX &q, const VecX &qd_prev,
                                         const PlannerConfig &cfg) {
  const int n = static_cast<int>(q.size());
  const double dt = cfg.dt;
  // Largest rate v from which a stop within `room` is possible, decelerating
  // by a = qdd_max * dt per step under forward-Euler position updates. The
  // travel dt * sum_j max(0, v - j a) is piecewise linear in v; on the piece
  // k a < v <= (k+1) a it equals dt ((k+1) v - a k (k+1) / 2).
  auto braking = [dt](double room, double decel) {
    if (room <= 0.0)
      return 0.0;
    const double a = decel * dt;
    const double x = room / (dt * a);
    auto tri = [](double k) { return 0.5 * k * (k + 1.0); };
    double k = std::max(0.0, std::ceil(0.5 * (std::sqrt(1.0 + 8.0 * x) - 3.0)));
    while (tri(k + 1.0) < x)
      k += 1.0;
    while (k > 0.0 && tri(k) >= x)
      k -= 1.0;
    return (room / dt + a * tri(k)) / (k + 1.0);
  };
  constexpr double kShrink = 1e-12;
  // The envelope brakes slightly below the limit so that following it never
  // needs more than the (shrunk) acceleration bound.
  constexpr double kEnvelopeDecel = 1.0 - 1e-9;
  VelocityBox box{VecX(n), VecX(n)};
  for (int i = 0; i < n; ++i) {
    const double a = cfg.qdd_max(i) * dt;
    const double up_room = cfg.q_max(i) - q(i);
    const double down_room = cfg.q_max(i) + q(i);
    const double hard_hi = std::min({cfg.qd_max(i), qd_prev(i) + a, up_room / dt}) - kShrink;
    const double hard_lo = std::max({-cfg.qd_max(i), qd_prev(i) - a, -down_room / dt}) + kShrink;
    // On the braking curve the envelope and the deceleration bound coincide;
    // rounding must not empty the box, so the envelope gives way to the hard bounds.
    box.hi(i) = std::min(hard_hi, std::max(braking(up_room, kEnvelopeDecel * cfg.qdd_max(i)) - kShrink, hard_lo));
    box.lo(i) = std::max(hard_lo, std::min(-braking(down_room, kEnvelopeDecel * cfg.qdd_max(i)) + kShrink, hard_hi));
  }
  return box;
}

/// State of the planner at grid index k, before the joint rate is chosen.
struct StepContext {
  int k = 0;
  int N = 0;
  BasePose pose;
  KinematicsCache cache;
  CouplingAnalysis coupling;
  VecX qd_prev;
  Vec3 r_d = Vec3::Zero();
};

struct CandidateEval {
  VecX qd;
  AssistMetric assist;
  double cost = std::numeric_limits<double>::infinity();
  double secondary = std::numeric_limits<double>::infinity();
  bool feasible = false;
  ConstraintReport report;
};

/// Scores one joint-rate candidate: coupling cost, tie-break objective, and
/// position-level constraints at the configuration it leads to.
class StepEvaluator {
public:
  StepEvaluator(const SmsModel &model, const StepContext &ctx, const PlannerConfig &cfg)
      : model_(model), ctx_(ctx), cfg_(cfg), target_(1.0 - ctx.coupling.svd.H_norm) {
    J_T_ = ctx.coupling.jacobian.J_star.topRows<3>();
    const Vec3 to_goal = ctx.r_d - ctx.cache.r_e;
    const double dist = to_goal.norm();
    if (dist > 1e-12)
      v_des_ = std::min({cfg.ee_speed_max, cfg.ee_speed_gain * dist,
                         std::sqrt(2.0 * cfg.ee_decel * dist)}) *
               to_goal / dist;
    const double mu2 = 1e-6;
    qd_ref_ = J_T_.transpose() * (J_T_ * J_T_.transpose() + mu2 * Mat3::Identity()).ldlt().solve(v_des_);
  }

  double target() const { return target_; }
  /// Damped least-squares joint rate realizing the desired end-effector velocity.
  const VecX &reference_rate() const { return qd_ref_; }
  const Vec3 &desired_ee_velocity() const { return v_des_; }
  const Mat3X &ee_jacobian() const { return J_T_; }

  /// |J_T qd - v_des|^2 + w_c |qd - qd_prev|^2 + w_r |qd|^2.
  double secondary(const VecX &qd) const {
    return (J_T_ * qd - v_des_).squaredNorm() +
           cfg_.continuity_weight * (qd - ctx_.qd_prev).squaredNorm() +
           cfg_.rate_weight * qd.squaredNorm();
  }

  CandidateEval evaluate(const VecX &qd) const {
    CandidateEval e;
    e.qd = qd;
    e.assist = assist_metric(qd, ctx_.coupling.jacobian.J_star, ctx_.cache.r_e, ctx_.r_d, cfg_.kappa);
    e.cost = step_cost(e.assist.C_tilde, ctx_.coupling.svd.H_norm);
    e.secondary = secondary(qd);
    e.report = screen(qd);
    e.feasible = e.report.feasible();
    return e;
  }

  /// Constraints of the configuration reached after applying qd for one step.
  ConstraintReport screen(const VecX &qd) const {
    const BasePose next =
        propagate_kinematics(model_, ctx_.pose, qd, cfg_.dt, cfg_.kinematic_substeps);
    StepSample s;
    s.k = ctx_.k + 1;
    s.q = next.q;
    s.qd = qd;
    s.qd_prev = ctx_.qd_prev;
    s.r_b = next.r_b;
    s.R_b = rotation_from_quat(next.eps);
    const auto c = forward_kinematics(model_, s.r_b, s.R_b, s.q);
    s.r_e = c.r_e;
    s.r_d = ctx_.r_d;
    s.points = collision_points(c, model_);
    ConstraintReport rep = check_constraints(s, cfg_, model_.base.dims);
    // The horizon ends at N; nothing lies beyond it to hold to the terminal bound.
    if (ctx_.k + 1 > ctx_.N)
      for (auto &f : rep.families)
        if (f.name == "terminal")
          f.evaluated = false;
    return rep;
  }

private:
  const SmsModel &model_;
  const StepContext &ctx_;
  const PlannerConfig &cfg_;
  double target_;
  Mat3X J_T_;
  Vec3 v_des_ = Vec3::Zero();
  VecX qd_ref_;
};

struct StepDecision {
  VecX alpha;
  VecX qd;
  AssistMetric assist;
  double cost = 0.0;
  double secondary = 0.0;
  int evaluations = 0;
};

namespace detail {

inline std::uint64_t step_seed(std::uint64_t seed, int k) {
  // splitmix64 finalizer: decorrelates consecutive step indices.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

} // namespace detail

/// Chooses alpha in [-1, 1]^n minimizing the coupling step cost over the
/// admissible joint rates.
///
/// Seeded uniform samples of alpha (plus the box vertices, the previous rate
/// and the tie-break reference) are clamped into the admissible box and
/// screened; the best few seed a coordinate descent along the singular
/// directions v_i with a shrinking step. The cost depends only on the
/// direction of the induced end-effector velocity, so when the cost-zeroing
/// alignment is attainable the winner is finally bisected onto it along a
/// segment to a candidate on the other side. Among candidates whose cost
/// matches the best to 1e-14, the smallest tie-break objective wins.
inline StepDecision optimize_step(const SmsModel &model, const StepContext &ctx,
                                  const PlannerConfig &cfg) {
  const int n = model.dof();
  const MatX &V = ctx.coupling.svd.V;
  const VelocityBox box = feasible_velocity_box(ctx.pose.q, ctx.qd_prev, cfg);
  if (box.empty()) {
    StepSample s;
    s.k = ctx.k;
    s.q = ctx.pose.q;
    s.qd = ctx.qd_prev;
    s.qd_prev = ctx.qd_prev;
    s.r_b = ctx.cache.r_b;
    s.R_b = ctx.cache.R_b;
    s.r_e = ctx.cache.r_e;
    s.r_d = ctx.r_d;
    s.points = collision_points(ctx.cache, model);
    throw InfeasibleStepError(ctx.k, check_constraints(s, cfg, model.base.dims),
                              "joint limits leave no admissible rate");
  }
  const StepEvaluator eval(model, ctx, cfg);
  std::vector<CandidateEval> pool;
  pool.reserve(cfg.candidate_count + (1 << std::min(n, 8)) + 2);

  std::mt19937_64 rng(detail::step_seed(cfg.seed, ctx.k));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int c = 0; c < cfg.candidate_count; ++c) {
    VecX alpha(n);
    for (int i = 0; i < n; ++i)
      alpha(i) = unit(rng);
    pool.push_back(eval.evaluate(box.clamp(V * alpha)));
  }
  if (n <= 8)
    for (int mask = 0; mask < (1 << n); ++mask) {
      VecX v(n);
      for (int i = 0; i < n; ++i)
        v(i) = (mask >> i) & 1 ? box.hi(i) : box.lo(i);
      pool.push_back(eval.evaluate(v));
    }
  pool.push_back(eval.evaluate(box.clamp(ctx.qd_prev)));
  pool.push_back(eval.evaluate(box.clamp(eval.reference_rate())));

  const auto best_violation = [&]() {
    return std::max_element(pool.begin(), pool.end(), [](const auto &a, const auto &b) {
      auto worst = [](const CandidateEval &e) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto &f : e.report.families)
          if (f.evaluated)
            m = std::min(m, f.worst_margin);
        return m;
      };
      return worst(a) < worst(b);
    });
  };
  if (std::none_of(pool.begin(), pool.end(), [](const auto &e) { return e.feasible; })) {
    const auto b = best_violation();
    throw InfeasibleStepError(ctx.k, b->report, "every candidate violates a constraint");
  }

  // Coordinate descent along the singular directions on cost + w * tie-break.
  constexpr double kTieWeight = 1e-4;
  auto merit = [&](const CandidateEval &e) { return e.cost + kTieWeight * e.secondary; };
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool[i].feasible)
      order.push_back(i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return merit(pool[a]) < merit(pool[b]); });
  const double width = (box.hi - box.lo).maxCoeff();
  const std::size_t starts = std::min<std::size_t>(3, order.size());
  std::vector<CandidateEval> refined;
  for (std::size_t s = 0; s < starts; ++s) {
    CandidateEval cur = pool[order[s]];
    VecX alpha = V.transpose() * cur.qd;
    double step = 0.5 * width;
    for (int sweep = 0; sweep < cfg.refine_sweeps; ++sweep, step *= 0.5) {
      for (int i = 0; i < n; ++i) {
        for (double sign : {1.0, -1.0}) {
          // Keep stepping while the merit improves.
          for (int rep = 0; rep < 8; ++rep) {
            VecX trial = alpha;
            trial(i) = std::clamp(trial(i) + sign * step, -1.0, 1.0);
            CandidateEval e = eval.evaluate(box.clamp(V * trial));
            if (!e.feasible || !(merit(e) < merit(cur)))
              break;
            cur = std::move(e);
            alpha = V.transpose() * cur.qd;
          }
        }
      }
    }
    refined.push_back(std::move(cur));
  }
  for (auto &r : refined)
    pool.push_back(std::move(r));

  // Bisect onto the cost-zeroing alignment when it is attainable.
  const double target = eval.target();
  const double lo_c = softplus_cost(-1.0, cfg.kappa), hi_c = softplus_cost(1.0, cfg.kappa);
  if (target > lo_c && target < hi_c) {
    const double cos_star = std::log(std::expm1(cfg.kappa * target)) / cfg.kappa;
    std::vector<std::size_t> feasible_idx;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i].feasible && !pool[i].assist.zero_velocity && !pool[i].assist.at_goal)
        feasible_idx.push_back(i);
    std::sort(feasible_idx.begin(), feasible_idx.end(),
              [&](std::size_t a, std::size_t b) { return merit(pool[a]) < merit(pool[b]); });
    std::vector<std::size_t> above, below;
    for (auto i : feasible_idx)
      (pool[i].assist.cos_theta_a > cos_star ? above : below).push_back(i);
    std::sort(above.begin(), above.end(),
              [&](auto a, auto b) { return pool[a].secondary < pool[b].secondary; });
    std::sort(below.begin(), below.end(),
              [&](auto a, auto b) { return pool[a].secondary < pool[b].secondary; });
    std::vector<CandidateEval> polished;
    const std::size_t anchors = std::min<std::size_t>(3, feasible_idx.size());
    for (std::size_t ai = 0; ai < anchors; ++ai) {
      const CandidateEval &x = pool[feasible_idx[ai]];
      const bool x_above = x.assist.cos_theta_a > cos_star;
      const auto &other = x_above ? below : above;
      for (std::size_t oi = 0; oi < std::min<std::size_t>(3, other.size()); ++oi) {
        const CandidateEval &y = pool[other[oi]];
        VecX a = x.qd, b = y.qd; // cos(a) and cos(b) straddle cos_star
        for (int it = 0; it < 80; ++it) {
          const VecX mid = 0.5 * (a + b);
          const auto m = assist_metric(mid, ctx.coupling.jacobian.J_star, ctx.cache.r_e, ctx.r_d,
                                       cfg.kappa);
          if ((m.cos_theta_a > cos_star) == x_above)
            a = mid;
          else
            b = mid;
        }
        CandidateEval e = eval.evaluate(box.clamp(0.5 * (a + b)));
        if (e.feasible)
          polished.push_back(std::move(e));
      }
    }
    for (auto &p : polished)
      pool.push_back(std::move(p));

    // Closed-form minimizer of the tie-break objective over end-effector
    // velocities on the cone cos = cos_star, one ray family per in-range
    // direction normal to the goal direction.
    const Vec3 to_goal = ctx.r_d - ctx.cache.r_e;
    if (to_goal.norm() > 1e-9) {
      const Vec3 d_hat = to_goal.normalized();
      const Mat3X &J_T = eval.ee_jacobian();
      int rank = 0;
      const MatX J_pinv = pseudo_inverse(J_T, 1e-10, &rank);
      const double w = cfg.continuity_weight + cfg.rate_weight;
      const VecX m = w > 0.0 ? VecX(cfg.continuity_weight / w * ctx.qd_prev) : VecX::Zero(n);
      const VecX a = m - J_pinv * (J_T * m);
      std::vector<Vec3> normals;
      const Eigen::JacobiSVD<MatX> jsvd(J_T, Eigen::ComputeFullU);
      for (int i = 0; i < rank; ++i) {
        Vec3 b = jsvd.matrixU().col(i);
        b -= b.dot(d_hat) * d_hat;
        for (const auto &prev : normals)
          b -= b.dot(prev) * prev;
        if (b.norm() > 1e-9)
          normals.push_back(b.normalized());
      }
      const double sin_star = std::sqrt(std::max(0.0, 1.0 - cos_star * cos_star));
      for (const auto &nrm : normals)
        for (double sign : {1.0, -1.0}) {
          const Vec3 u = cos_star * d_hat + sign * sin_star * nrm;
          const VecX b = J_pinv * u;
          if (!((J_T * b - u).norm() <= 1e-9) || b.squaredNorm() < 1e-300)
            continue;
          // On the ray J_T qd = t u the objective is |t u - v_des|^2 + w |a + t b - m|^2.
          const double t = (u.dot(eval.desired_ee_velocity()) + w * b.dot(m - a)) /
                           (1.0 + w * b.squaredNorm());
          if (!(t > 0.0))
            continue;
          CandidateEval e = eval.evaluate(box.clamp(a + t * b));
          if (e.feasible)
            pool.push_back(std::move(e));
        }
    }
  }

  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto &e : pool)
    if (e.feasible)
      best_cost = std::min(best_cost, e.cost);
  const CandidateEval *chosen = nullptr;
  for (const auto &e : pool)
    if (e.feasible && e.cost <= best_cost + 1e-14 &&
        (!chosen || e.secondary < chosen->secondary))
      chosen = &e;

  // The cost depends on the direction of qd only, so the tie-break objective
  // can be minimized exactly along the ray through the chosen rate.
  CandidateEval scaled;
  if (!chosen->assist.zero_velocity) {
    const VecX &x = chosen->qd;
    const Vec3 e_x = eval.ee_jacobian() * x;
    double s_lo = 0.0, s_hi = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (x(i) > 0.0) {
        s_lo = std::max(s_lo, box.lo(i) / x(i));
        s_hi = std::min(s_hi, box.hi(i) / x(i));
      } else if (x(i) < 0.0) {
        s_lo = std::max(s_lo, box.hi(i) / x(i));
        s_hi = std::min(s_hi, box.lo(i) / x(i));
      } else if (box.lo(i) > 0.0 || box.hi(i) < 0.0) {
        s_hi = -1.0;
      }
    }
    if (s_hi > s_lo) {
      const double s_opt =
          (e_x.dot(eval.desired_ee_velocity()) + cfg.continuity_weight * x.dot(ctx.qd_prev)) /
          (e_x.squaredNorm() + (cfg.continuity_weight + cfg.rate_weight) * x.squaredNorm());
      const double s = std::clamp(s_opt, s_lo, s_hi);
      if (s > 0.0 && std::abs(s - 1.0) > 1e-12) {
        scaled = eval.evaluate(s * x);
        if (scaled.feasible && scaled.cost <= best_cost + 1e-14 && scaled.secondary < chosen->secondary)
          chosen = &scaled;
      }
    }
  }

  StepDecision d;
  d.alpha = V.transpose() * chosen->qd;
  d.qd = V * d.alpha;
  d.assist = assist_metric(d.qd, ctx.coupling.jacobian.J_star, ctx.cache.r_e, ctx.r_d, cfg.kappa);
  d.cost = step_cost(d.assist.C_tilde, ctx.coupling.svd.H_norm);
  d.secondary = chosen->secondary;
  d.evaluations = static_cast<int>(pool.size());
  return d;
}

// ---------------------------------------------------------------------------
// Trajectory assembly

struct PlanRow {
  double t = 0.0;
  VecX q, qd, qdd, alpha;
  Vec3 r_b = Vec3::Zero();
  Vec4 eps = Vec4(0.0, 0.0, 0.0, 1.0);
  Vec3 v_b = Vec3::Zero();
  Vec3 w_b = Vec3::Zero();
  Vec3 r_e = Vec3::Zero();
  double H_norm = 0.0;
  double cos_theta_a = 0.0;
  double C_tilde = 0.0;
  double step_cost = 0.0;
};

/// Time-gridded plan. Row k holds the configuration at t_k and the joint
/// rate qd_k = V(k) alpha(k) applied over [t_k, t_k + dt]; qdd_k is the
/// backward difference of qd.
struct TrajectoryPlan {
  double dt = 0.0;
  int N = 0;
  Vec3 r_d = Vec3::Zero();
  VecX initial_qd;
  std::vector<PlanRow> rows;
  std::vector<ConstraintReport> reports;
  bool feasible = true;
  std::string diagnostics;
  double total_cost = 0.0; ///< sum of step costs over k = 1..N

  /// Largest distance of the base COM from its starting point.
  double max_base_displacement() const {
    double m = 0.0;
    for (const auto &r : rows)
      m = std::max(m, (r.r_b - rows.front().r_b).norm());
    return m;
  }

  double ee_error(std::size_t k) const { return (r_d - rows[k].r_e).norm(); }
};

using StepObserver = std::function<void(const StepContext &, const StepDecision &)>;

/// Upper bound on end-effector travel over the horizon at the joint-rate
/// limits: each joint sweeps at most qd_max * T around its axis, moving the
/// tip by at most that angle times its outboard reach. Base reaction is
/// bounded generously by doubling.
inline double reachable_travel_bound(const SmsModel &model, const PlannerConfig &cfg) {
  double bound = 0.0;
  for (int i = 0; i < model.dof(); ++i) {
    double reach = 0.0;
    for (int j = i; j < model.dof(); ++j)
      reach += model.link_tip_offset[j].norm();
    bound += cfg.qd_max(i) * cfg.horizon * reach;
  }
  return 2.0 * bound;
}

inline TrajectoryPlan plan_trajectory(const SmsModel &model, const SmsState &initial,
                                      const Vec3 &r_d, const PlannerConfig &cfg,
                                      const StepObserver &observer = {}) {
  const int n = model.dof();
  model.validate();
  initial.validate(n);
  cfg.validate(n);

  TrajectoryPlan plan;
  plan.dt = cfg.dt;
  plan.N = cfg.steps();
  plan.r_d = r_d;
  plan.initial_qd = initial.qd;

  {
    const double travel = (r_d - forward_kinematics(model, initial).r_e).norm() - cfg.r_th;
    const double bound = reachable_travel_bound(model, cfg);
    if (travel > bound) {
      ConstraintReport rep;
      ConstraintResult vel{"joint_velocity"};
      vel.worst_margin = bound - travel;
      vel.passed = false;
      vel.where = "horizon travel bound";
      rep.families.push_back(vel);
      throw InfeasibleStepError(0, rep, "joint velocity limits cannot cover the distance to the goal "
                                        "within the horizon");
    }
  }

  BasePose pose{initial.r_b, initial.eps.normalized(), initial.q};
  VecX qd_prev = initial.qd;
  plan.rows.reserve(plan.N + 1);
  for (int k = 0; k <= plan.N; ++k) {
    StepContext ctx;
    ctx.k = k;
    ctx.N = plan.N;
    ctx.pose = pose;
    ctx.cache = forward_kinematics(model, pose.r_b, rotation_from_quat(pose.eps), pose.q);
    ctx.coupling = analyze_coupling(model, ctx.cache);
    ctx.qd_prev = qd_prev;
    ctx.r_d = r_d;

    const StepDecision d = optimize_step(model, ctx, cfg);
    if (observer)
      observer(ctx, d);

    PlanRow row;
    row.t = k * cfg.dt;
    row.q = pose.q;
    row.qd = d.qd;
    row.qdd = (d.qd - qd_prev) / cfg.dt;
    row.alpha = d.alpha;
    row.r_b = pose.r_b;
    row.eps = pose.eps;
    const Vec6 twist = ctx.coupling.C_bm * d.qd;
    row.v_b = twist.head<3>();
    row.w_b = twist.tail<3>();
    row.r_e = ctx.cache.r_e;
    row.H_norm = ctx.coupling.svd.H_norm;
    row.cos_theta_a = d.assist.cos_theta_a;
    row.C_tilde = d.assist.C_tilde;
    row.step_cost = d.cost;
    if (k >= 1)
      plan.total_cost += d.cost;

    StepSample s;
    s.k = k;
    s.q = row.q;
    s.qd = row.qd;
    s.qd_prev = qd_prev;
    s.r_b = row.r_b;
    s.R_b = ctx.cache.R_b;
    s.r_e = row.r_e;
    s.r_d = r_d;
    s.points = collision_points(ctx.cache, model);
    ConstraintReport rep = check_constraints(s, cfg, model.base.dims);
    if (!rep.feasible()) {
      plan.feasible = false;
      plan.diagnostics += "k=" + std::to_string(k) + "\n" + rep.summary();
    }
    plan.reports.push_back(std::move(rep));
    plan.rows.push_back(std::move(row));

    if (k < plan.N)
      pose = propagate_kinematics(model, pose, d.qd, cfg.dt, cfg.kinematic_substeps);
    qd_prev = d.qd;
  }
  return plan;
}

} // namespace sms

#endif // SMS_PLANNER_HPP
