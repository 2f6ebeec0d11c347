#ifndef SMS_KINEMATICS_HPP
#define SMS_KINEMATICS_HPP

#include "sms/common.hpp"
#include "sms/model.hpp"

#include <cmath>
#include <vector>

namespace sms {

/// Cross-product matrix: skew(r) * v == r.cross(v).
inline Mat3 skew(const Vec3 &r) {
  Mat3 m;
  m << 0.0, -r.z(), r.y(), //
      r.z(), 0.0, -r.x(),  //
      -r.y(), r.x(), 0.0;
  return m;
}

/// 4x3 quaternion kinematics matrix for eps = [vector; scalar].
inline Eigen::Matrix<double, 4, 3> quat_G(const Vec4 &e) {
  Eigen::Matrix<double, 4, 3> g;
  g << e(3), -e(2), e(1), //
      e(2), e(3), -e(0),  //
      -e(1), e(0), e(3),  //
      -e(0), -e(1), -e(2);
  return g;
}

/// eps_dot = 1/2 G(eps) w. `w` is resolved in the base body frame; callers
/// holding an inertial-frame rate rotate it with R_b^T first.
inline Vec4 quat_rate(const Vec4 &eps, const Vec3 &w) {
  if (std::abs(eps.squaredNorm() - 1.0) > 1e-6)
    throw InvalidStateError("quat_rate: quaternion is not unit norm");
  return 0.5 * quat_G(eps) * w;
}

/// Body-to-inertial rotation matrix (Hamilton product, scalar last).
/// The quaternion is normalized before use.
inline Mat3 rotation_from_quat(const Vec4 &eps_raw) {
  const Vec4 e = eps_raw.normalized();
  const Vec3 v = e.head<3>();
  const double s = e(3);
  return (s * s - v.squaredNorm()) * Mat3::Identity() + 2.0 * v * v.transpose() + 2.0 * s * skew(v);
}

inline Vec4 quat_from_axis_angle(const Vec3 &axis, double angle) {
  const Vec3 a = axis.normalized();
  Vec4 e;
  e.head<3>() = std::sin(angle / 2.0) * a;
  e(3) = std::cos(angle / 2.0);
  return e;
}

inline Vec4 quat_from_rotation(const Mat3 &R) {
  const Eigen::Quaterniond q(R);
  return Vec4(q.x(), q.y(), q.z(), q.w());
}

inline Mat3 axis_rotation(const Vec3 &axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

/// Inertial-frame geometry of every body for one configuration.
struct KinematicsCache {
  Vec3 r_b = Vec3::Zero();
  Mat3 R_b = Mat3::Identity();
  std::vector<Vec3> p;     ///< joint positions
  std::vector<Vec3> r;     ///< link COM positions
  std::vector<Mat3> R;     ///< link body-to-inertial rotations
  std::vector<Vec3> axes;  ///< joint axes, inertial frame
  Vec3 r_e = Vec3::Zero(); ///< end-effector position

  int dof() const { return static_cast<int>(p.size()); }
};

inline KinematicsCache forward_kinematics(const SmsModel &model, const Vec3 &r_b, const Mat3 &R_b,
                                          const VecX &q) {
  const int n = model.dof();
  KinematicsCache c;
  c.r_b = r_b;
  c.R_b = R_b;
  c.p.resize(n);
  c.r.resize(n);
  c.R.resize(n);
  c.axes.resize(n);

  Mat3 parent = R_b;
  Vec3 joint = r_b + R_b * model.mount_offset;
  for (int i = 0; i < n; ++i) {
    c.axes[i] = parent * model.joint_axes[i];
    c.R[i] = parent * axis_rotation(model.joint_axes[i], q(i));
    c.p[i] = joint;
    c.r[i] = joint + c.R[i] * model.link_com_offset[i];
    joint = joint + c.R[i] * model.link_tip_offset[i];
    parent = c.R[i];
  }
  c.r_e = joint;
  return c;
}

inline KinematicsCache forward_kinematics(const SmsModel &model, const SmsState &state) {
  return forward_kinematics(model, state.r_b, rotation_from_quat(state.eps), state.q);
}

/// Per-link and end-effector Jacobians. J_T[i] / J_R[i] carry zero columns
/// for joints outboard of link i.
struct LinkJacobians {
  Mat3X J_Te;
  Mat3X J_Re;
  std::vector<Mat3X> J_T;
  std::vector<Mat3X> J_R;
  Mat6 J_b;
  Mat6X J_m;
};

inline LinkJacobians link_jacobians(const KinematicsCache &c) {
  const int n = c.dof();
  LinkJacobians j;
  j.J_Te.setZero(3, n);
  j.J_Re.setZero(3, n);
  j.J_T.assign(n, Mat3X::Zero(3, n));
  j.J_R.assign(n, Mat3X::Zero(3, n));
  for (int i = 0; i < n; ++i) {
    j.J_Te.col(i) = c.axes[i].cross(c.r_e - c.p[i]);
    j.J_Re.col(i) = c.axes[i];
    for (int k = 0; k <= i; ++k) {
      j.J_T[i].col(k) = c.axes[k].cross(c.r[i] - c.p[k]);
      j.J_R[i].col(k) = c.axes[k];
    }
  }
  j.J_b.setIdentity();
  j.J_b.topRightCorner<3, 3>() = skew(c.r_e - c.r_b).transpose();
  j.J_m.resize(6, n);
  j.J_m.topRows<3>() = j.J_Te;
  j.J_m.bottomRows<3>() = j.J_Re;
  return j;
}

} // namespace sms

#endif // SMS_KINEMATICS_HPP
