#ifndef SMS_DYNAMICS_HPP
#define SMS_DYNAMICS_HPP

#include "sms/common.hpp"
#include "sms/kinematics.hpp"
#include "sms/model.hpp"

#include <array>
#include <vector>

namespace sms {

/// Blocks of the (6+n)x(6+n) generalized inertia matrix for the velocity
/// vector u = [v_b; w_b; qd]. Link and base inertias enter in the inertial frame.
struct InertiaBlocks {
  Mat3 H_v;
  Mat3 H_vw;
  Mat3 H_w;
  Mat3X H_vm;
  Mat3X H_wm;
  MatX H_m;
  Vec3 r_cb;              ///< system COM minus base COM
  std::vector<Vec3> r_ib; ///< link COM minus base COM

  int dof() const { return static_cast<int>(H_m.rows()); }

  /// [[H_v, H_vw], [H_vw^T, H_w]]: the momentum coefficient of the base twist.
  Mat6 base_block() const {
    Mat6 a;
    a << H_v, H_vw, H_vw.transpose(), H_w;
    return a;
  }

  /// [H_vm; H_wm]: the momentum coefficient of the joint rates.
  Mat6X coupling_block() const {
    Mat6X b(6, dof());
    b << H_vm, H_wm;
    return b;
  }

  MatX assemble() const {
    const int n = dof();
    MatX h(6 + n, 6 + n);
    h.topLeftCorner<6, 6>() = base_block();
    h.topRightCorner(6, n) = coupling_block();
    h.bottomLeftCorner(n, 6) = coupling_block().transpose();
    h.bottomRightCorner(n, n) = H_m;
    return h;
  }
};

inline InertiaBlocks inertia_blocks(const SmsModel &model, const KinematicsCache &c,
                                    const LinkJacobians &jac) {
  const int n = model.dof();
  const double m_c = model.total_mass();
  InertiaBlocks b;

  Vec3 weighted = Vec3::Zero();
  b.r_ib.resize(n);
  for (int i = 0; i < n; ++i) {
    b.r_ib[i] = c.r[i] - c.r_b;
    weighted += model.links[i].mass * b.r_ib[i];
  }
  b.r_cb = weighted / m_c;

  b.H_v = m_c * Mat3::Identity();
  b.H_vw = m_c * skew(b.r_cb).transpose();
  b.H_w = c.R_b * model.base.inertia * c.R_b.transpose();
  b.H_vm.setZero(3, n);
  b.H_wm.setZero(3, n);
  b.H_m.setZero(n, n);
  for (int i = 0; i < n; ++i) {
    const double m = model.links[i].mass;
    const Mat3 I = c.R[i] * model.links[i].inertia * c.R[i].transpose();
    const Mat3 S = skew(b.r_ib[i]);
    b.H_w += I + m * S.transpose() * S;
    b.H_vm += m * jac.J_T[i];
    b.H_wm += I * jac.J_R[i] + m * S * jac.J_T[i];
    b.H_m += jac.J_R[i].transpose() * I * jac.J_R[i] + m * jac.J_T[i].transpose() * jac.J_T[i];
  }
  return b;
}

inline InertiaBlocks inertia_blocks(const SmsModel &model, const KinematicsCache &c) {
  return inertia_blocks(model, c, link_jacobians(c));
}

inline MatX generalized_inertia(const SmsModel &model, const Vec3 &r_b, const Mat3 &R_b,
                                const VecX &q) {
  return inertia_blocks(model, forward_kinematics(model, r_b, R_b, q)).assemble();
}

inline VecX velocity_vector(const SmsState &s) {
  VecX u(6 + s.qd.size());
  u << s.v_b, s.w_b, s.qd;
  return u;
}

inline double kinetic_energy(const InertiaBlocks &b, const Vec3 &v_b, const Vec3 &w_b,
                             const VecX &qd) {
  VecX u(6 + qd.size());
  u << v_b, w_b, qd;
  return 0.5 * u.dot(b.assemble() * u);
}

inline Vec3 system_com(const SmsModel &model, const KinematicsCache &c) {
  Vec3 acc = model.base.mass * c.r_b;
  for (int i = 0; i < model.dof(); ++i)
    acc += model.links[i].mass * c.r[i];
  return acc / model.total_mass();
}

/// Inertial-frame linear and angular velocity of every link COM, composed
/// body by body along the chain.
struct BodyVelocities {
  std::vector<Vec3> v;
  std::vector<Vec3> w;
};

inline BodyVelocities body_velocities(const KinematicsCache &c, const SmsState &s) {
  const int n = c.dof();
  BodyVelocities out;
  out.v.resize(n);
  out.w.resize(n);
  Vec3 w = s.w_b;
  for (int i = 0; i < n; ++i) {
    w += c.axes[i] * s.qd(i);
    out.w[i] = w;
    Vec3 v = s.v_b + s.w_b.cross(c.r[i] - c.r_b);
    for (int k = 0; k <= i; ++k)
      v += c.axes[k].cross(c.r[i] - c.p[k]) * s.qd(k);
    out.v[i] = v;
  }
  return out;
}

/// Linear momentum and angular momentum about the inertial origin.
struct Momentum {
  Vec3 linear = Vec3::Zero();
  Vec3 angular = Vec3::Zero();
};

/// Block-matrix form. The angular rows of H u give momentum about the base
/// COM; r_b x h_l shifts it to the inertial origin.
inline Momentum momentum(const SmsModel &model, const SmsState &s) {
  const auto c = forward_kinematics(model, s);
  const auto b = inertia_blocks(model, c);
  const Vec6 h = b.base_block() * (Vec6() << s.v_b, s.w_b).finished() + b.coupling_block() * s.qd;
  Momentum out;
  out.linear = h.head<3>();
  out.angular = h.tail<3>() + s.r_b.cross(out.linear);
  return out;
}

/// Per-body sum form.
inline Momentum momentum_from_bodies(const SmsModel &model, const SmsState &s) {
  const auto c = forward_kinematics(model, s);
  const auto bv = body_velocities(c, s);
  Momentum out;
  out.linear = model.base.mass * s.v_b;
  out.angular = c.R_b * model.base.inertia * c.R_b.transpose() * s.w_b +
                s.r_b.cross(model.base.mass * s.v_b);
  for (int i = 0; i < model.dof(); ++i) {
    const double m = model.links[i].mass;
    const Mat3 I = c.R[i] * model.links[i].inertia * c.R[i].transpose();
    out.linear += m * bv.v[i];
    out.angular += I * bv.w[i] + c.r[i].cross(m * bv.v[i]);
  }
  return out;
}

/// Central-difference partials of H along each generalized direction:
/// base translation (identically zero, H is translation invariant), base
/// rotation about the inertial x/y/z axes (left perturbation of R_b) and
/// each joint angle.
inline std::vector<MatX> inertia_partials(const SmsModel &model, const Vec3 &r_b, const Mat3 &R_b,
                                          const VecX &q, double delta = 1e-6) {
  const int n = model.dof();
  const int dim = 6 + n;
  std::vector<MatX> d(dim, MatX::Zero(dim, dim));
  for (int a = 0; a < 3; ++a) {
    const Vec3 axis = Vec3::Unit(a);
    const MatX hp = generalized_inertia(model, r_b, axis_rotation(axis, delta) * R_b, q);
    const MatX hm = generalized_inertia(model, r_b, axis_rotation(axis, -delta) * R_b, q);
    d[3 + a] = (hp - hm) / (2.0 * delta);
  }
  for (int j = 0; j < n; ++j) {
    VecX qp = q, qm = q;
    qp(j) += delta;
    qm(j) -= delta;
    d[6 + j] = (generalized_inertia(model, r_b, R_b, qp) - generalized_inertia(model, r_b, R_b, qm)) /
               (2.0 * delta);
  }
  return d;
}

/// Time derivative of H along the velocity u.
inline MatX inertia_rate(const std::vector<MatX> &partials, const VecX &u) {
  MatX hdot = MatX::Zero(u.size(), u.size());
  for (int k = 0; k < u.size(); ++k)
    hdot += u(k) * partials[k];
  return hdot;
}

/// Christoffel-form Coriolis/centrifugal matrix C(u).
///
/// c_ijk = 1/2 (dH_ij/dk + dH_ik/dj - dH_jk/di) summed against u_k, plus the
/// gyroscopic block [L_b x] on the base angular rows/columns, where
/// L_b = (H u)_{3..5}. The extra block appears because w_b is not the time
/// derivative of any attitude coordinate. It is skew, so H_dot - 2C stays skew.
inline MatX coriolis_matrix(const MatX &H, const std::vector<MatX> &partials, const VecX &u) {
  const int dim = static_cast<int>(u.size());
  MatX m2(dim, dim);
  for (int j = 0; j < dim; ++j)
    m2.col(j) = partials[j] * u;
  MatX c = 0.5 * (inertia_rate(partials, u) + m2 - m2.transpose());
  const Vec3 l_b = (H * u).segment<3>(3);
  c.block<3, 3>(3, 3) += skew(l_b);
  return c;
}

inline MatX coriolis_matrix(const SmsModel &model, const SmsState &s) {
  const Mat3 R_b = rotation_from_quat(s.eps);
  return coriolis_matrix(generalized_inertia(model, s.r_b, R_b, s.q),
                         inertia_partials(model, s.r_b, R_b, s.q), velocity_vector(s));
}

/// Everything the equations of motion need at one state.
struct DynamicsTerms {
  KinematicsCache cache;
  InertiaBlocks blocks;
  MatX H;
  VecX coriolis; ///< C(u) u
};

inline DynamicsTerms dynamics_terms(const SmsModel &model, const SmsState &s) {
  DynamicsTerms t;
  t.cache = forward_kinematics(model, s);
  t.blocks = inertia_blocks(model, t.cache);
  t.H = t.blocks.assemble();
  const VecX u = velocity_vector(s);
  t.coriolis = coriolis_matrix(t.H, inertia_partials(model, s.r_b, t.cache.R_b, s.q), u) * u;
  return t;
}

inline VecX coriolis_vector(const SmsModel &model, const SmsState &s) {
  return dynamics_terms(model, s).coriolis;
}

/// Solves H u_dot = tau - C u.
inline VecX forward_dynamics(const DynamicsTerms &t, const VecX &tau) {
  const Eigen::LDLT<MatX> ldlt(t.H);
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1.0 / kConditionLimit))
    throw SingularConfigurationError("generalized inertia matrix is singular or ill-conditioned");
  return ldlt.solve(tau - t.coriolis);
}

inline VecX forward_dynamics(const SmsModel &model, const SmsState &s, const VecX &tau) {
  return forward_dynamics(dynamics_terms(model, s), tau);
}

namespace detail {

// Flat layout: [r_b(3), eps(4), q(n), v_b(3), w_b(3), qd(n)].
inline VecX pack(const SmsState &s) {
  const auto n = s.q.size();
  VecX x(13 + 2 * n);
  x << s.r_b, s.eps, s.q, s.v_b, s.w_b, s.qd;
  return x;
}

inline SmsState unpack(const VecX &x, int n) {
  SmsState s;
  s.r_b = x.segment<3>(0);
  s.eps = x.segment<4>(3);
  s.q = x.segment(7, n);
  s.v_b = x.segment<3>(7 + n);
  s.w_b = x.segment<3>(10 + n);
  s.qd = x.segment(13 + n, n);
  return s;
}

inline VecX state_derivative(const SmsModel &model, const VecX &x, const VecX &tau) {
  const int n = model.dof();
  const SmsState s = unpack(x, n);
  const DynamicsTerms t = dynamics_terms(model, s);
  const VecX acc = forward_dynamics(t, tau);
  VecX dx(x.size());
  dx.segment<3>(0) = s.v_b;
  dx.segment<4>(3) = 0.5 * quat_G(s.eps) * (t.cache.R_b.transpose() * s.w_b);
  dx.segment(7, n) = s.qd;
  dx.segment(7 + n, 6 + n) = acc;
  return dx;
}

} // namespace detail

/// One classical RK4 step of the full free-floating dynamics with the
/// generalized force held constant. The quaternion is renormalized afterwards.
inline SmsState integrate_step(const SmsModel &model, const SmsState &s, const VecX &tau,
                               double dt) {
  if (!(dt > 0.0))
    throw InvalidStateError("integrate_step: dt must be > 0");
  const int n = model.dof();
  const VecX x = detail::pack(s);
  const VecX k1 = detail::state_derivative(model, x, tau);
  const VecX k2 = detail::state_derivative(model, x + 0.5 * dt * k1, tau);
  const VecX k3 = detail::state_derivative(model, x + 0.5 * dt * k2, tau);
  const VecX k4 = detail::state_derivative(model, x + dt * k3, tau);
  SmsState out = detail::unpack(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), n);
  out.eps.normalize();
  return out;
}

/// Generalized force with zero base wrench.
inline VecX joint_only_force(const VecX &tau_q) {
  VecX tau = VecX::Zero(6 + tau_q.size());
  tau.tail(tau_q.size()) = tau_q;
  return tau;
}

} // namespace sms

#endif // SMS_DYNAMICS_HPP
