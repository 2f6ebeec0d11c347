#ifndef SMS_MODEL_HPP
#define SMS_MODEL_HPP

#include "sms/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sms {

/// Mass properties of one rigid body. `inertia` is about the body's center of
/// mass, expressed in its own body frame.
struct BodyParams {
  double mass = 0.0;
  Mat3 inertia = Mat3::Zero();
  Vec3 dims = Vec3::Zero(); // (length, width, height)
};

/// Physical description of a free-floating base carrying an n-joint serial arm.
///
/// Joint i rotates about `joint_axes[i]`, expressed in the frame of its parent
/// (the base for i = 0). Offsets are expressed in the frame of the link they
/// belong to; at q = 0 every link frame coincides with the base frame.
struct SmsModel {
  BodyParams base;
  std::vector<BodyParams> links;
  std::vector<Vec3> joint_axes;
  Vec3 mount_offset = Vec3::Zero();
  std::vector<Vec3> link_com_offset;
  std::vector<Vec3> link_tip_offset;

  int dof() const { return static_cast<int>(links.size()); }

  double total_mass() const {
    double m = base.mass;
    for (const auto &l : links)
      m += l.mass;
    return m;
  }

  void validate() const;
};

/// Position- and velocity-level state. `eps` stores the attitude quaternion
/// vector part first and the scalar last. `w_b` is the base angular velocity
/// expressed in the inertial frame.
struct SmsState {
  Vec3 r_b = Vec3::Zero();
  Vec4 eps = Vec4(0.0, 0.0, 0.0, 1.0);
  VecX q;
  Vec3 v_b = Vec3::Zero();
  Vec3 w_b = Vec3::Zero();
  VecX qd;

  void validate(int n, double quat_tol = 1e-9) const;
};

namespace detail {

inline void check_body(const BodyParams &b, const std::string &name, bool need_dims) {
  if (!(b.mass > 0.0) || !std::isfinite(b.mass))
    throw ValidationError(name + ".mass", "must be > 0");
  if (!b.inertia.allFinite() || (b.inertia - b.inertia.transpose()).cwiseAbs().maxCoeff() >
                                    1e-12 * std::max(1.0, b.inertia.cwiseAbs().maxCoeff()))
    throw ValidationError(name + ".inertia", "must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat3> es(b.inertia, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0))
    throw ValidationError(name + ".inertia", "must be positive definite");
  if (need_dims && !(b.dims.minCoeff() > 0.0))
    throw ValidationError(name + ".dims", "must be strictly positive");
}

} // namespace detail

inline void SmsModel::validate() const {
  const auto n = links.size();
  if (n < 1)
    throw ValidationError("links", "at least one link is required");
  if (joint_axes.size() != n || link_com_offset.size() != n || link_tip_offset.size() != n)
    throw ValidationError("links", "per-link geometry arrays must have one entry per link");
  detail::check_body(base, "base", true);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = "links[" + std::to_string(i) + "]";
    detail::check_body(links[i], name, true);
    if (std::abs(joint_axes[i].norm() - 1.0) > 1e-12)
      throw ValidationError(name + ".axis", "must be a unit vector");
  }
  if (!(total_mass() > 0.0))
    throw ValidationError("links", "total mass must be > 0");
}

inline void SmsState::validate(int n, double quat_tol) const {
  if (q.size() != n || qd.size() != n)
    throw InvalidStateError("joint vectors must have " + std::to_string(n) + " entries");
  if (std::abs(eps.squaredNorm() - 1.0) > quat_tol)
    throw InvalidStateError("attitude quaternion is not unit norm");
  if (!r_b.allFinite() || !eps.allFinite() || !q.allFinite() || !v_b.allFinite() ||
      !w_b.allFinite() || !qd.allFinite())
    throw InvalidStateError("state contains non-finite values");
}

/// Solid cuboid inertia about its center, body axes along (length, width, height).
inline Mat3 box_inertia(double mass, const Vec3 &dims) {
  const double l2 = dims.x() * dims.x(), w2 = dims.y() * dims.y(), h2 = dims.z() * dims.z();
  return (mass / 12.0 * Vec3(w2 + h2, l2 + h2, l2 + w2)).asDiagonal();
}

/// Builds a planar arm: revolute joints about local z, links along local +x,
/// COM at the link midpoint, arm mounted at the center of the base +x face.
inline SmsModel make_planar_model(const BodyParams &base, const std::vector<BodyParams> &links) {
  SmsModel m;
  m.base = base;
  m.links = links;
  m.mount_offset = Vec3(base.dims.x() / 2.0, 0.0, 0.0);
  for (const auto &l : links) {
    m.joint_axes.emplace_back(Vec3::UnitZ());
    m.link_com_offset.emplace_back(l.dims.x() / 2.0, 0.0, 0.0);
    m.link_tip_offset.emplace_back(l.dims.x(), 0.0, 0.0);
  }
  m.validate();
  return m;
}

namespace table1 {

inline BodyParams base() {
  return {31.015, Vec3(1.1594, 1.1594, 1.1129).asDiagonal(), Vec3(0.464, 0.464, 0.483)};
}

inline BodyParams link() {
  return {0.569, Vec3(0.0001, 0.0043, 0.0043).asDiagonal(), Vec3(0.3, 0.03, 0.03)};
}

/// Three-link planar arm with the tabulated masses, inertias and dimensions.
inline SmsModel model() { return make_planar_model(base(), {link(), link(), link()}); }

/// Tabulated initial condition: r_b = [-0.0356, -0.0006, 0] m, identity
/// attitude, q = 1 deg per joint, everything at rest.
inline SmsState initial_state() {
  SmsState s;
  s.r_b = Vec3(-0.0356, -0.0006, 0.0);
  s.eps = Vec4(0.0, 0.0, 0.0, 1.0);
  s.q = VecX::Constant(3, 1.0 * kDegToRad);
  s.qd = VecX::Zero(3);
  return s;
}

} // namespace table1

} // namespace sms

#endif // SMS_MODEL_HPP
