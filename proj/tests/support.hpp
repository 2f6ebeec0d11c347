#ifndef SMS_TESTS_SUPPORT_HPP
#define SMS_TESTS_SUPPORT_HPP

#include "sms/sms.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace sms::testing {

inline Vec4 random_quat(std::mt19937_64 &rng) {
  std::normal_distribution<double> g;
  Vec4 e(g(rng), g(rng), g(rng), g(rng));
  return e.normalized();
}

inline Vec3 random_vec(std::mt19937_64 &rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

/// Arbitrary 3D state: random attitude, joint angles and velocities.
inline SmsState random_state(std::mt19937_64 &rng, int n) {
  std::uniform_real_distribution<double> ang(-2.5, 2.5), rate(-0.6, 0.6);
  SmsState s;
  s.r_b = random_vec(rng, 0.5);
  s.eps = random_quat(rng);
  s.q.resize(n);
  s.qd.resize(n);
  for (int i = 0; i < n; ++i) {
    s.q(i) = ang(rng);
    s.qd(i) = rate(rng);
  }
  s.v_b = random_vec(rng, 0.1);
  s.w_b = random_vec(rng, 0.1);
  return s;
}

/// Same as random_state, but with the base twist set for zero total momentum.
inline SmsState random_zero_momentum_state(const SmsModel &m, std::mt19937_64 &rng) {
  SmsState s = random_state(rng, m.dof());
  const auto c = forward_kinematics(m, s);
  const Vec6 tw = coupling_matrix(inertia_blocks(m, c)) * s.qd;
  s.v_b = tw.head<3>();
  s.w_b = tw.tail<3>();
  return s;
}

/// Rodrigues' formula written out, independent of the library rotation helpers.
inline Mat3 rodrigues(const Vec3 &axis, double angle) {
  const Vec3 k = axis.normalized();
  Mat3 K;
  K << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Mat3::Identity() + std::sin(angle) * K + (1.0 - std::cos(angle)) * K * K;
}

inline Mat3 quat_to_matrix(const Vec4 &e) {
  const double x = e(0), y = e(1), z = e(2), w = e(3);
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w), //
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),  //
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return R;
}

using Mat4 = Eigen::Matrix4d;

inline Mat4 homogeneous(const Mat3 &R, const Vec3 &p) {
  Mat4 T = Mat4::Identity();
  T.topLeftCorner<3, 3>() = R;
  T.topRightCorner<3, 1>() = p;
  return T;
}

struct ChainPoses {
  std::vector<Mat4> joint;   // frame of link i at its joint
  std::vector<Vec3> com;
  Vec3 ee;
};

/// Chain composition from 4x4 homogeneous transforms.
inline ChainPoses chain_oracle(const SmsModel &m, const Vec3 &r_b, const Vec4 &eps, const VecX &q) {
  ChainPoses out;
  Mat4 T = homogeneous(quat_to_matrix(eps), r_b) * homogeneous(Mat3::Identity(), m.mount_offset);
  for (int i = 0; i < m.dof(); ++i) {
    T = T * homogeneous(rodrigues(m.joint_axes[i], q(i)), Vec3::Zero());
    out.joint.push_back(T);
    out.com.push_back((T * m.link_com_offset[i].homogeneous()).head<3>());
    T = T * homogeneous(Mat3::Identity(), m.link_tip_offset[i]);
  }
  out.ee = T.topRightCorner<3, 1>();
  return out;
}

struct Twist {
  Vec3 v;
  Vec3 w;
};

/// Link COM twists by outward recursion along the chain (joint to joint).
inline std::vector<Twist> recursive_twists(const SmsModel &m, const SmsState &s) {
  const ChainPoses poses = chain_oracle(m, s.r_b, s.eps, s.q);
  std::vector<Twist> out;
  Vec3 w = s.w_b;
  Vec3 joint_pos = s.r_b + quat_to_matrix(s.eps) * m.mount_offset;
  Vec3 joint_vel = s.v_b + s.w_b.cross(joint_pos - s.r_b);
  for (int i = 0; i < m.dof(); ++i) {
    const Mat3 R = poses.joint[i].topLeftCorner<3, 3>();
    const Vec3 p = poses.joint[i].topRightCorner<3, 1>();
    // joint axis is fixed in both parent and child frame
    w = w + R * m.joint_axes[i] * s.qd(i);
    out.push_back({joint_vel + w.cross(poses.com[i] - p), w});
    const Vec3 next = (poses.joint[i] * m.link_tip_offset[i].homogeneous()).head<3>();
    joint_vel = joint_vel + w.cross(next - p);
  }
  return out;
}

inline double per_body_energy(const SmsModel &m, const SmsState &s) {
  const Mat3 R_b = quat_to_matrix(s.eps);
  double T = 0.5 * m.base.mass * s.v_b.squaredNorm() +
             0.5 * s.w_b.dot(R_b * m.base.inertia * R_b.transpose() * s.w_b);
  const auto tw = recursive_twists(m, s);
  const ChainPoses poses = chain_oracle(m, s.r_b, s.eps, s.q);
  for (int i = 0; i < m.dof(); ++i) {
    const Mat3 R = poses.joint[i].topLeftCorner<3, 3>();
    T += 0.5 * m.links[i].mass * tw[i].v.squaredNorm() +
         0.5 * tw[i].w.dot(R * m.links[i].inertia * R.transpose() * tw[i].w);
  }
  return T;
}

inline Momentum per_body_momentum(const SmsModel &m, const SmsState &s) {
  const Mat3 R_b = quat_to_matrix(s.eps);
  Momentum h;
  h.linear = m.base.mass * s.v_b;
  h.angular = R_b * m.base.inertia * R_b.transpose() * s.w_b + s.r_b.cross(m.base.mass * s.v_b);
  const auto tw = recursive_twists(m, s);
  const ChainPoses poses = chain_oracle(m, s.r_b, s.eps, s.q);
  for (int i = 0; i < m.dof(); ++i) {
    const Mat3 R = poses.joint[i].topLeftCorner<3, 3>();
    h.linear += m.links[i].mass * tw[i].v;
    h.angular += R * m.links[i].inertia * R.transpose() * tw[i].w +
                 poses.com[i].cross(m.links[i].mass * tw[i].v);
  }
  return h;
}

/// Configuration advanced by h along the state's velocities (first order).
inline SmsState advance(const SmsState &s, double h) {
  SmsState o = s;
  o.r_b = s.r_b + h * s.v_b;
  const double wn = s.w_b.norm();
  const Mat3 R = wn > 0.0 ? rodrigues(s.w_b, wn * h) * quat_to_matrix(s.eps) : quat_to_matrix(s.eps);
  o.eps = quat_from_rotation(R);
  o.q = s.q + h * s.qd;
  return o;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

struct BaselineRecord {
  int k = 0;
  double optimizer_cost = 0.0;
  double baseline_cost = 0.0;
  int baseline_feasible = 0;
  VecX alpha;
};

/// Minimum cost over 200 uniformly sampled alpha (seed unrelated to the
/// planner's), clipped to the admissible rate box and screened.
inline BaselineRecord random_baseline(const SmsModel &m, const StepContext &ctx, const StepDecision &d,
                                      const PlannerConfig &cfg) {
  const StepEvaluator eval(m, ctx, cfg);
  const VelocityBox box = feasible_velocity_box(ctx.pose.q, ctx.qd_prev, cfg);
  std::mt19937_64 rng(0xBA5E11 + ctx.k);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  BaselineRecord r;
  r.k = ctx.k;
  r.optimizer_cost = d.cost;
  r.alpha = d.alpha;
  r.baseline_cost = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 200; ++i) {
    const VecX alpha = Vec3(u(rng), u(rng), u(rng));
    const CandidateEval e = eval.evaluate(box.clamp(ctx.coupling.svd.V * alpha));
    if (!e.feasible)
      continue;
    ++r.baseline_feasible;
    r.baseline_cost = std::min(r.baseline_cost, e.cost);
  }
  return r;
}

} // namespace sms::testing

#endif // SMS_TESTS_SUPPORT_HPP
