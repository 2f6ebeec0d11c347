#include "support.hpp"

#include <gtest/gtest.h>

using namespace sms;
using namespace sms::testing;

namespace {

SmsModel arm() { return table1::model(); }

CouplingAnalysis coupling_at(const SmsModel &m, const SmsState &s) {
  return analyze_coupling(m, forward_kinematics(m, s));
}

} // namespace

// ---------------------------------------------------------------------------
// C_bm

TEST(CouplingMatrix, SatisfiesZeroMomentum) {
  const SmsModel m = arm();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const SmsState s = random_state(rng, 3);
    const auto b = inertia_blocks(m, forward_kinematics(m, s));
    const Mat6X C = coupling_matrix(b);
    const VecX qd = Vec3(u(rng), u(rng), u(rng));
    EXPECT_LE((b.base_block() * (C * qd) + b.coupling_block() * qd).norm(), 1e-10);
  }
}

TEST(CouplingMatrix, ZeroMomentumAlsoHoldsPerBody) {
  const SmsModel m = arm();
  std::mt19937_64 rng(102);
  for (int i = 0; i < 50; ++i) {
    const SmsState s = random_zero_momentum_state(m, rng);
    const Momentum h = per_body_momentum(m, s);
    EXPECT_LE(h.linear.norm(), 1e-12);
    EXPECT_LE(h.angular.norm(), 1e-12);
  }
}

TEST(CouplingMatrix, VanishesForMasslessArm) {
  SmsModel m = arm();
  for (auto &l : m.links) {
    l.mass *= 1e-9;
    l.inertia *= 1e-9;
  }
  std::mt19937_64 rng(103);
  for (int i = 0; i < 20; ++i) {
    const auto b = inertia_blocks(m, forward_kinematics(m, random_state(rng, 3)));
    EXPECT_LE(coupling_matrix(b).norm(), 1e-6);
  }
}

TEST(CouplingMatrix, PlanarRowsVanish) {
  const SmsModel m = arm();
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> ang(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    SmsState s = table1::initial_state();
    s.eps = quat_from_axis_angle(Vec3::UnitZ(), ang(rng));
    s.q = Vec3(ang(rng), ang(rng), ang(rng));
    const Mat6X C = coupling_at(m, s).C_bm;
    EXPECT_LE(C.row(2).norm(), 1e-12);
    EXPECT_LE(C.row(3).norm(), 1e-12);
    EXPECT_LE(C.row(4).norm(), 1e-12);
  }
}

TEST(CouplingMatrix, IllConditionedBlockRejected) {
  InertiaBlocks b;
  b.H_v = Mat3::Zero();
  b.H_vw = Mat3::Zero();
  b.H_w = Mat3::Zero();
  b.H_vm = Mat3X::Zero(3, 3);
  b.H_wm = Mat3X::Zero(3, 3);
  b.H_m = MatX::Identity(3, 3);
  EXPECT_THROW(coupling_matrix(b), ConditioningError);
}

// ---------------------------------------------------------------------------
// Generalized Jacobian

TEST(GeneralizedJacobian, TwoPathEndEffectorVelocity) {
  const SmsModel m = arm();
  std::mt19937_64 rng(111);
  for (int i = 0; i < 100; ++i) {
    const SmsState s = random_zero_momentum_state(m, rng);
    const auto c = forward_kinematics(m, s);
    const auto j = link_jacobians(c);
    const CouplingAnalysis a = analyze_coupling(m, c);
    const Vec6 twist = (Vec6() << s.v_b, s.w_b).finished();
    const Vec6 via_base = j.J_b * twist + j.J_m * s.qd;
    EXPECT_LE((via_base - a.jacobian.J_star * s.qd).norm(), 1e-10);
    // Independent point-velocity oracle from the recursive chain twists.
    const auto tw = recursive_twists(m, s);
    const ChainPoses p = chain_oracle(m, s.r_b, s.eps, s.q);
    const Vec3 v_ee = tw[2].v + tw[2].w.cross(p.ee - p.com[2]);
    EXPECT_LE((v_ee - (a.jacobian.J_star * s.qd).head<3>()).norm(), 1e-10);
    EXPECT_LE((tw[2].w - (a.jacobian.J_star * s.qd).tail<3>()).norm(), 1e-10);
  }
}

TEST(GeneralizedJacobian, MatchesFiniteDifferenceOfPropagatedMotion) {
  const SmsModel m = arm();
  std::mt19937_64 rng(112);
  const double h = 1e-4;
  for (int i = 0; i < 10; ++i) {
    const SmsState s = random_state(rng, 3);
    const CouplingAnalysis a = coupling_at(m, s);
    const BasePose start{s.r_b, s.eps, s.q};
    const BasePose fwd = propagate_kinematics(m, start, s.qd, h, 4);
    const BasePose back = propagate_kinematics(m, start, -s.qd, h, 4);
    const Vec3 ep = forward_kinematics(m, fwd.r_b, rotation_from_quat(fwd.eps), fwd.q).r_e;
    const Vec3 em = forward_kinematics(m, back.r_b, rotation_from_quat(back.eps), back.q).r_e;
    EXPECT_LE(((ep - em) / (2 * h) - a.jacobian.J_star.topRows<3>() * s.qd).norm(), 1e-7);
  }
}

TEST(GeneralizedJacobian, PseudoInverseIdentities) {
  const SmsModel m = arm();
  std::mt19937_64 rng(113);
  for (int i = 0; i < 100; ++i) {
    const SmsState s = random_state(rng, 3);
    const CouplingAnalysis a = coupling_at(m, s);
    const MatX &J = a.jacobian.J_star;
    const MatX &P = a.jacobian.J_star_pinv;
    EXPECT_EQ(P.rows(), 3);
    EXPECT_EQ(P.cols(), 6);
    EXPECT_LE((J * P * J - J).norm(), 1e-10);
    EXPECT_LE((P * J * P - P).norm(), 1e-10 * std::max(1.0, P.norm()));
    EXPECT_LE(((J * P).transpose() - J * P).norm(), 1e-10);
    EXPECT_LE(((P * J).transpose() - P * J).norm(), 1e-10);
  }
}

TEST(GeneralizedJacobian, EndToBaseCompositionAtFullRank) {
  const SmsModel m = arm();
  std::mt19937_64 rng(114);
  int checked = 0;
  for (int i = 0; i < 100; ++i) {
    const SmsState s = random_state(rng, 3);
    const CouplingAnalysis a = coupling_at(m, s);
    if (a.jacobian.rank_deficient)
      continue;
    ++checked;
    const Vec6 ee = a.jacobian.J_star * s.qd;
    EXPECT_LE((a.jacobian.C_be * ee - a.C_bm * s.qd).norm(), 1e-10);
  }
  EXPECT_GT(checked, 90);
}

TEST(GeneralizedJacobian, RankDeficiencyFlagged) {
  Mat6 J_b = Mat6::Identity();
  Mat6X J_m = Mat6X::Zero(6, 3);
  J_m(0, 0) = 1.0;
  J_m(0, 1) = 1.0;
  J_m(1, 2) = 1.0;
  const auto g = generalized_jacobian(J_b, J_m, Mat6X::Zero(6, 3));
  EXPECT_EQ(g.rank, 2);
  EXPECT_TRUE(g.rank_deficient);
  EXPECT_LE((g.J_star * g.J_star_pinv * g.J_star - g.J_star).norm(), 1e-12);
}

TEST(PseudoInverse, SmallSingularValuesDropped) {
  MatX a = MatX::Zero(3, 3);
  a(0, 0) = 1.0;
  a(1, 1) = 1e-12;
  int rank = 0;
  const MatX p = pseudo_inverse(a, 1e-10, &rank);
  EXPECT_EQ(rank, 1);
  EXPECT_NEAR(p(0, 0), 1.0, 1e-15);
  EXPECT_EQ(p(1, 1), 0.0);
}

// ---------------------------------------------------------------------------
// SVD and entropy

TEST(Svd, ReconstructionAndOrthogonality) {
  const SmsModel m = arm();
  std::mt19937_64 rng(121);
  for (int i = 0; i < 100; ++i) {
    const CouplingAnalysis a = coupling_at(m, random_state(rng, 3));
    const SvdMetrics &s = a.svd;
    MatX Sigma = MatX::Zero(6, 3);
    for (int k = 0; k < 3; ++k)
      Sigma(k, k) = s.sigma(k);
    EXPECT_LE((s.U * Sigma * s.V.transpose() - a.C_bm).norm(), 1e-12 * std::max(1.0, a.C_bm.norm()));
    EXPECT_LE((s.U.transpose() * s.U - Mat6::Identity()).norm(), 1e-12);
    EXPECT_LE((s.V.transpose() * s.V - MatX::Identity(3, 3)).norm(), 1e-12);
    for (int k = 0; k + 1 < 3; ++k)
      EXPECT_GE(s.sigma(k), s.sigma(k + 1));
    EXPECT_GE(s.sigma(2), 0.0);
    for (int k = 0; k < 3; ++k) {
      Eigen::Index idx = 0;
      s.V.col(k).cwiseAbs().maxCoeff(&idx);
      EXPECT_GT(s.V(idx, k), 0.0);
    }
    EXPECT_GE(s.H_norm, 0.0);
    EXPECT_LE(s.H_norm, 1.0);
  }
}

TEST(Entropy, UniformSpectrumIsOne) {
  for (double c : {1e-3, 0.5, 1.0, 7.0, 1e3})
    EXPECT_EQ(normalized_entropy(Vec3(c, c, c), 3), 1.0);
}

TEST(Entropy, SingleModeIsZero) {
  for (double c : {1e-3, 1.0, 1e3})
    EXPECT_EQ(normalized_entropy(Vec3(c, 0, 0), 3), 0.0);
}

TEST(Entropy, HandEvaluatedSpectrum) {
  // s = (1/2, 1/4, 1/4): -sum s ln s = (3/2) ln 2.
  const double expect = 1.5 * std::log(2.0) / std::log(3.0);
  EXPECT_NEAR(expect, 0.9464, 1e-4);
  EXPECT_NEAR(normalized_entropy(Vec3(2, 1, 1), 3), 0.9464, 1e-4);
  EXPECT_NEAR(normalized_entropy(Vec3(2, 1, 1), 3), expect, 1e-15);
}

TEST(Entropy, ScaleInvariant) {
  const Vec3 s(0.7, 0.2, 0.05);
  const double h = normalized_entropy(s, 3);
  for (double c : {1e-3, 1.0, 1e3})
    EXPECT_NEAR(normalized_entropy(c * s, 3), h, 1e-12);
}

TEST(Entropy, DegenerateSpectrumFlagged) {
  bool degenerate = false;
  EXPECT_EQ(normalized_entropy(Vec3::Zero(), 3, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  normalized_entropy(Vec3(1, 0, 0), 3, &degenerate);
  EXPECT_FALSE(degenerate);
}

TEST(Entropy, SingleJointUnsupported) {
  EXPECT_THROW(normalized_entropy(VecX::Ones(1), 1), UnsupportedDimensionError);
  EXPECT_THROW(svd_metrics(Mat6X::Ones(6, 1)), UnsupportedDimensionError);
}

TEST(Entropy, ScaledCouplingMatrixGivesSameEntropy) {
  const SmsModel m = arm();
  std::mt19937_64 rng(122);
  const Mat6X C = coupling_at(m, random_state(rng, 3)).C_bm;
  const double h = svd_metrics(C).H_norm;
  for (double c : {1e-3, 1.0, 1e3})
    EXPECT_NEAR(svd_metrics(c * C).H_norm, h, 1e-12);
}

// ---------------------------------------------------------------------------
// Joint velocity synthesis

TEST(CoupledVelocity, Examples) {
  const SmsModel m = arm();
  const MatX V = coupling_at(m, table1::initial_state()).svd.V;
  EXPECT_EQ(coupled_joint_velocity(Vec3(1, 0, 0), V), VecX(V.col(0)));
  EXPECT_EQ(coupled_joint_velocity(Vec3::Zero(), V), VecX::Zero(3));
  const Vec3 a(0.3, -0.2, 0.1), b(-0.4, 0.5, 0.6);
  EXPECT_LE((coupled_joint_velocity(a + b, V) - coupled_joint_velocity(a, V) -
             coupled_joint_velocity(b, V))
                .norm(),
            1e-15);
  EXPECT_LE(coupled_joint_velocity(Vec3(1, -1, 1), V).norm(), std::sqrt(3.0) + 1e-12);
}

TEST(CoupledVelocity, OutOfBoundsRejected) {
  const MatX V = MatX::Identity(3, 3);
  EXPECT_THROW(coupled_joint_velocity(Vec3(1.01, 0, 0), V), ValidationError);
  EXPECT_THROW(coupled_joint_velocity(VecX::Zero(2), V), ValidationError);
}

// ---------------------------------------------------------------------------
// Assist metric and softplus

TEST(Softplus, Values) {
  EXPECT_NEAR(softplus_cost(0.0, 10.0), std::log(2.0) / 10.0, 1e-15);
  EXPECT_NEAR(softplus_cost(0.0, 10.0), 0.0693, 1e-4);
  EXPECT_TRUE(std::isfinite(softplus_cost(1.0, 1e6)));
  EXPECT_NEAR(softplus_cost(1.0, 1e6), 1.0, 1e-6);
  EXPECT_GT(softplus_cost(-1.0, 100.0), 0.0);
  EXPECT_GE(softplus_cost(-1.0, 1e6), 0.0);
  double prev = softplus_cost(-1.0, 10.0);
  for (int i = 1; i <= 200; ++i) {
    const double c = softplus_cost(-1.0 + 0.01 * i, 10.0);
    EXPECT_GT(c, prev);
    prev = c;
  }
  for (int i = 0; i <= 200; ++i) {
    const double x = -1.0 + 0.01 * i;
    EXPECT_LE(std::abs(softplus_cost(x, 1e3) - std::max(0.0, x)), 1e-2);
  }
}

TEST(Assist, ParallelAndAntiparallel) {
  Mat6X J = Mat6X::Zero(6, 3);
  J.topLeftCorner<3, 3>() = Mat3::Identity();
  const Vec3 r_e(0, 0, 0), r_d(0.2, 0, 0);
  const AssistMetric a = assist_metric(Vec3(0.5, 0, 0), J, r_e, r_d, 10.0);
  EXPECT_NEAR(a.cos_theta_a, 1.0, 1e-15);
  EXPECT_NEAR(a.C_tilde, std::log1p(std::exp(10.0)) / 10.0, 1e-15);
  const AssistMetric b = assist_metric(Vec3(-0.5, 0, 0), J, r_e, r_d, 10.0);
  EXPECT_NEAR(b.cos_theta_a, -1.0, 1e-15);
  const AssistMetric c = assist_metric(Vec3(0, 0.5, 0), J, r_e, r_d, 10.0);
  EXPECT_NEAR(c.cos_theta_a, 0.0, 1e-15);
  EXPECT_NEAR(c.C_tilde, std::log(2.0) / 10.0, 1e-15);
}

TEST(Assist, NeutralCases) {
  Mat6X J = Mat6X::Zero(6, 3);
  J.topLeftCorner<3, 3>() = Mat3::Identity();
  const AssistMetric at_goal = assist_metric(Vec3(1, 0, 0), J, Vec3(1, 1, 1), Vec3(1, 1, 1), 10.0);
  EXPECT_TRUE(at_goal.at_goal);
  EXPECT_EQ(at_goal.cos_theta_a, 0.0);
  const AssistMetric still = assist_metric(Vec3::Zero(), J, Vec3::Zero(), Vec3(1, 0, 0), 10.0);
  EXPECT_TRUE(still.zero_velocity);
  EXPECT_EQ(still.cos_theta_a, 0.0);
}

TEST(Assist, DirectionOnly) {
  const SmsModel m = arm();
  std::mt19937_64 rng(131);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const SmsState s = random_state(rng, 3);
    const auto c = forward_kinematics(m, s);
    const CouplingAnalysis a = analyze_coupling(m, c);
    const Vec3 r_d = c.r_e + random_vec(rng, 0.3);
    const Vec3 alpha(u(rng), u(rng), u(rng));
    const double base = assist_metric(coupled_joint_velocity(alpha, a.svd.V), a.jacobian.J_star,
                                      c.r_e, r_d, 10.0)
                            .cos_theta_a;
    EXPECT_GE(base, -1.0);
    EXPECT_LE(base, 1.0);
    for (double k : {1e-3, 0.5}) {
      const double scaled = assist_metric(coupled_joint_velocity(k * alpha, a.svd.V),
                                          a.jacobian.J_star, c.r_e, r_d, 10.0)
                                .cos_theta_a;
      EXPECT_NEAR(scaled, base, 1e-12);
    }
  }
}
