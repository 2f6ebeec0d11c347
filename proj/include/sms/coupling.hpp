#ifndef SMS_COUPLING_HPP
#define SMS_COUPLING_HPP

#include "sms/common.hpp"
#include "sms/dynamics.hpp"
#include "sms/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace sms {

/// Joint-to-base coupling matrix: [v_b; w_b] = C_bm qd under zero momentum.
inline Mat6X coupling_matrix(const InertiaBlocks &b) {
  const Eigen::LDLT<Mat6> ldlt(b.base_block());
  if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1.0 / kConditionLimit))
    throw ConditioningError("base momentum block is ill-conditioned");
  return -ldlt.solve(b.coupling_block());
}

struct GeneralizedJacobian {
  Mat6X J_star;      ///< 6 x n, end-effector twist per joint rate with base reaction
  MatX J_star_pinv;  ///< n x 6 Moore-Penrose pseudo-inverse
  Mat6 C_be;         ///< end-to-base coupling
  int rank = 0;
  bool rank_deficient = false;
};

/// Pseudo-inverse through the SVD; singular values below rel_tol * sigma_1 are
/// treated as zero.
inline MatX pseudo_inverse(const MatX &a, double rel_tol, int *rank = nullptr) {
  const Eigen::JacobiSVD<MatX> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const VecX &sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
  MatX sigma_inv = MatX::Zero(a.cols(), a.rows());
  int r = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0.0) {
      sigma_inv(i, i) = 1.0 / sv(i);
      ++r;
    }
  }
  if (rank)
    *rank = r;
  return svd.matrixV() * sigma_inv * svd.matrixU().transpose();
}

inline GeneralizedJacobian generalized_jacobian(const Mat6 &J_b, const Mat6X &J_m,
                                                const Mat6X &C_bm, double rel_tol = 1e-10) {
  GeneralizedJacobian g;
  g.J_star = J_b * C_bm + J_m;
  g.J_star_pinv = pseudo_inverse(g.J_star, rel_tol, &g.rank);
  g.rank_deficient = g.rank < std::min<int>(6, static_cast<int>(J_m.cols()));
  g.C_be = C_bm * g.J_star_pinv;
  return g;
}

/// Normalized Shannon entropy of a singular-value spectrum over n joint
/// directions: -sum s_i ln s_i / ln n with s_i = sigma_i / sum sigma, 0 ln 0 = 0.
/// Spectra shorter than n are implicitly zero-padded.
inline double normalized_entropy(const VecX &sigma, int n, bool *degenerate = nullptr) {
  if (n < 2)
    throw UnsupportedDimensionError("normalized entropy needs at least two joint directions");
  const double total = sigma.sum();
  if (degenerate)
    *degenerate = !(total > 0.0);
  if (!(total > 0.0))
    return 0.0;
  // A uniform spectrum is the maximum; log rounding would leave it an ulp short.
  if (sigma.size() == n && (sigma.array() == sigma(0)).all())
    return 1.0;
  double h = 0.0;
  for (int i = 0; i < sigma.size(); ++i) {
    const double s = sigma(i) / total;
    if (s > 0.0)
      h -= s * std::log(s);
  }
  return std::clamp(h / std::log(static_cast<double>(n)), 0.0, 1.0);
}

struct SvdMetrics {
  Mat6 U;
  VecX sigma; ///< min(6, n) values, descending
  MatX V;     ///< n x n, columns sign-fixed
  double H_norm = 0.0;
  bool degenerate = false;
};

/// SVD of C_bm plus the entropy of its spectrum. Each column of V is flipped
/// so its largest-magnitude entry is positive (with the matching column of U),
/// which keeps singular directions continuous along a trajectory.
inline SvdMetrics svd_metrics(const Mat6X &C_bm) {
  const int n = static_cast<int>(C_bm.cols());
  if (n < 2)
    throw UnsupportedDimensionError("coupling analysis needs n >= 2 joints");
  const Eigen::JacobiSVD<MatX> svd(C_bm, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdMetrics m;
  m.U = svd.matrixU();
  m.V = svd.matrixV();
  m.sigma = svd.singularValues();
  for (int i = 0; i < n; ++i) {
    Eigen::Index idx = 0;
    m.V.col(i).cwiseAbs().maxCoeff(&idx);
    if (m.V(idx, i) < 0.0) {
      m.V.col(i) *= -1.0;
      if (i < 6)
        m.U.col(i) *= -1.0;
    }
  }
  m.H_norm = normalized_entropy(m.sigma, n, &m.degenerate);
  return m;
}

/// qd_DC = sum alpha_i v_i.
inline VecX coupled_joint_velocity(const VecX &alpha, const MatX &V) {
  if (alpha.size() != V.cols())
    throw ValidationError("alpha", "dimension mismatch with V");
  if (alpha.cwiseAbs().maxCoeff() > 1.0)
    throw ValidationError("alpha", "entries must lie in [-1, 1]");
  return V * alpha;
}

/// (1/kappa) log(1 + exp(kappa x)), evaluated without overflow.
inline double softplus_cost(double x, double kappa) {
  const double z = kappa * x;
  return (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))) / kappa;
}

struct AssistMetric {
  double cos_theta_a = 0.0;
  double C_tilde = 0.0;
  Vec3 ee_velocity = Vec3::Zero(); ///< translational part of J* qd_DC
  bool at_goal = false;
  bool zero_velocity = false;
};

/// Alignment between the coupling-induced end-effector velocity and the
/// direction to the goal. At the goal, or when the induced velocity vanishes,
/// the metric is neutral (0) and the matching flag is raised.
inline AssistMetric assist_metric(const VecX &qd_dc, const Mat6X &J_star, const Vec3 &r_e,
                                  const Vec3 &r_d, double kappa) {
  AssistMetric a;
  const Vec3 to_goal = r_d - r_e;
  a.ee_velocity = J_star.topRows<3>() * qd_dc;
  a.at_goal = to_goal.norm() <= 1e-9;
  a.zero_velocity = a.ee_velocity.norm() <= 1e-12;
  if (!a.at_goal && !a.zero_velocity) {
    const Vec3 d_hat = to_goal.normalized();
    a.cos_theta_a = std::clamp(d_hat.dot(a.ee_velocity) / a.ee_velocity.norm(), -1.0, 1.0);
  }
  a.C_tilde = softplus_cost(a.cos_theta_a, kappa);
  return a;
}

/// Coupling quantities at one configuration.
struct CouplingAnalysis {
  Mat6X C_bm;
  GeneralizedJacobian jacobian;
  SvdMetrics svd;
};

inline CouplingAnalysis analyze_coupling(const SmsModel &model, const KinematicsCache &c) {
  const auto jac = link_jacobians(c);
  const auto blocks = inertia_blocks(model, c, jac);
  CouplingAnalysis a;
  a.C_bm = coupling_matrix(blocks);
  a.jacobian = generalized_jacobian(jac.J_b, jac.J_m, a.C_bm);
  a.svd = svd_metrics(a.C_bm);
  return a;
}

} // namespace sms

#endif // SMS_COUPLING_HPP
