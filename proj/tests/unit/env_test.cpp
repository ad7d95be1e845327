#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "ars/env.hpp"
#include "ars/lqr.hpp"

namespace ars {
namespace {

struct ZeroPolicy {
  Eigen::Index p;
  Vector operator()(const Vector&) const { return Vector::Zero(p); }
};

struct GainPolicy {
  Matrix K;
  Vector operator()(const Vector& x) const { return K * x; }
};

TEST(Rollout, TraceSumsToTotal) {
  LqrEnv env(make_lqr_tridiag_instance());
  PolicyParams p = PolicyParams::zero(Version::v1, 3, 3);
  p.gain = -0.5 * Matrix::Identity(3, 3);
  const LinearPolicy pol(p, nullptr, 0, 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RolloutResult r = rollout(env, pol, seed, 300, true);
    ASSERT_FALSE(r.diverged);
    ASSERT_EQ(r.steps_used, 300);
    double sum = 0.0;
    for (const auto& s : *r.trace) sum += s.reward;
    ASSERT_NEAR(sum, r.total_reward, 1e-9 * std::abs(r.total_reward));
  }
}

TEST(Rollout, SameSeedSameResult) {
  PointMassEnv a, b;
  PolicyParams p = PolicyParams::zero(Version::v1, 2, 4);
  p.gain(0, 0) = -1.0;
  p.gain(1, 1) = -1.0;
  const LinearPolicy pol(p, nullptr, 0, 0.0);
  EXPECT_EQ(rollout(a, pol, 42, 200, true), rollout(b, pol, 42, 200, true));
  EXPECT_NE(rollout(a, pol, 42, 200).total_reward, rollout(a, pol, 43, 200).total_reward);
}

TEST(Rollout, UnstableLqrRolloutDivergesWithPenalty) {
  LqrInstance inst = make_lqr_tridiag_instance();
  LqrEnv env(inst);
  const GainPolicy pol{3.0 * Matrix::Identity(3, 3)};  // closed loop 4.01 I + off-diagonal
  const RolloutResult r = rollout(env, pol, 7, 300, true);
  EXPECT_TRUE(r.diverged);
  EXPECT_LT(r.steps_used, 300);
  EXPECT_TRUE(std::isfinite(r.total_reward));
  EXPECT_LT(r.tail_penalty, 0.0);
  double sum = 0.0;
  for (const auto& s : *r.trace) sum += s.reward;
  EXPECT_NEAR(sum + r.tail_penalty, r.total_reward, 1e-9 * std::abs(r.total_reward));
}

TEST(Rollout, OptimalPolicyTelescopes) {
  // Noiseless LQR under the optimal gain: the value function x'Px satisfies
  // V(x) = x'Qx + u'Ru + V(x'), so the H-step cost is x0'Px0 - xH'PxH.
  LqrInstance inst = make_lqr_tridiag_instance(0.0, 1.0);
  const auto sol = lqr::solve_riccati(inst);
  LqrEnv env(inst);
  const GainPolicy pol{sol.K_opt};
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const RolloutResult r = rollout(env, pol, seed, 300, true);
    const Vector& x0 = r.trace->front().state;
    Vector xH = x0;
    for (int t = 0; t < 300; ++t) xH = (inst.A + inst.B * sol.K_opt) * xH;
    const double predicted = -(x0.dot(sol.P * x0) - xH.dot(sol.P * xH));
    EXPECT_NEAR(r.total_reward, predicted, 1e-9 * std::abs(predicted));
  }
}

TEST(Rollout, OpenLoopGrowthMatchesSpectralRadius) {
  LqrInstance inst = make_lqr_tridiag_instance(0.0, 1.0);
  LqrEnv env(inst);
  const ZeroPolicy pol{3};
  const RolloutResult r = rollout(env, pol, 11, 401, true);
  const double n200 = (*r.trace)[200].state.norm();
  const double n400 = (*r.trace)[400].state.norm();
  const double rate = std::pow(n400 / n200, 1.0 / 200.0);
  const double rho = 1.01 + 0.02 * std::cos(std::numbers::pi / 4.0);
  EXPECT_NEAR(rate, rho, 0.02 * rho);
}

TEST(Rollout, VisitedStatesAreTheOnesActedOn) {
  QuadraticEnv env(Matrix::Identity(2, 2), 5, 3);
  const ZeroPolicy pol{2};
  RunningStat stat(2);
  rollout(env, pol, 0, 5, false, &stat);
  EXPECT_EQ(stat.count(), 5u);
  EXPECT_LT((stat.mean() - env.initial_state()).norm(), 1e-15);
  EXPECT_LT(stat.variance().norm(), 1e-15);
}

TEST(QuadraticEnv, DeterministicAcrossSeeds) {
  auto env = make_quadratic_env(3, 2);
  const GainPolicy pol{Matrix::Constant(2, 3, -0.1)};
  const double r0 = rollout(*env, pol, 0, 10).total_reward;
  for (std::uint64_t s = 1; s < 10; ++s) EXPECT_EQ(rollout(*env, pol, s, 10).total_reward, r0);
}

TEST(QuadraticEnv, RewardIsNegatedNextStateNorm) {
  QuadraticEnv env(Matrix::Identity(2, 2), 10, 0);
  const Vector x0 = env.reset(0);
  const Vector u = (Vector(2) << 0.5, -0.25).finished();
  const Transition tr = env.step(u);
  EXPECT_EQ(tr.next_state, x0 + u);
  EXPECT_DOUBLE_EQ(tr.reward, -(x0 + u).squaredNorm());
  // The gain -I drives the state to zero in one step, so every reward is 0.
  const GainPolicy dead_beat{-Matrix::Identity(2, 2)};
  EXPECT_EQ(rollout(env, dead_beat, 0, 10).total_reward, 0.0);
}

TEST(PointMass, TerminatesOutsideBound) {
  PointMassConfig cfg;
  cfg.accel_noise_std = 0.0;
  PointMassEnv env(cfg);
  struct Push {
    Vector operator()(const Vector&) const { return (Vector(2) << 50.0, 0.0).finished(); }
  };
  const RolloutResult r = rollout(env, Push{}, 3, 200);
  EXPECT_LT(r.steps_used, 200);
  EXPECT_FALSE(r.diverged);
}

TEST(PointMass, BonusWrapperShiftsTrainingRewardsOnly) {
  auto inner = make_point_mass_env();
  auto wrapped = subtract_bonus_wrapper(inner->clone(), 1.0);
  const ZeroPolicy pol{2};
  const RolloutResult a = rollout(*inner, pol, 9, 200);
  const RolloutResult b = rollout(*wrapped, pol, 9, 200);
  ASSERT_EQ(a.steps_used, b.steps_used);
  EXPECT_NEAR(a.total_reward - b.total_reward, a.steps_used, 1e-9);
  auto eval = wrapped->evaluation_env().clone();
  EXPECT_EQ(rollout(*eval, pol, 9, 200).total_reward, a.total_reward);
}

TEST(LqrEnv, StepMatchesDynamics) {
  LqrInstance inst = make_lqr_tridiag_instance(0.0, 1.0);
  LqrEnv env(inst);
  const Vector x = env.reset(5);
  const Vector u = (Vector(3) << 1.0, 2.0, 3.0).finished();
  const Transition tr = env.step(u);
  EXPECT_LT((tr.next_state - (inst.A * x + u)).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(tr.reward, -(1e-3 * x.squaredNorm() + u.squaredNorm()));
  EXPECT_FALSE(env.spec().whitening_supported);
  EXPECT_EQ(env.spec().horizon, 300);
}

TEST(LqrInstance, FileRoundTrip) {
  LqrInstance inst = make_lqr_tridiag_instance(0.3, 2.0);
  std::stringstream ss;
  write_lqr_instance(ss, inst);
  const LqrInstance back = parse_lqr_instance(ss);
  EXPECT_EQ(back.A, inst.A);
  EXPECT_EQ(back.B, inst.B);
  EXPECT_EQ(back.Q, inst.Q);
  EXPECT_EQ(back.R, inst.R);
  EXPECT_EQ(back.noise_std, 0.3);
  EXPECT_EQ(back.x0_std, 2.0);
}

TEST(LqrInstance, ParsesCommentsAndDefaults) {
  std::stringstream ss("# scalar\n1 1\n2\n1\n1 # Q\n1\n");
  const LqrInstance inst = parse_lqr_instance(ss);
  EXPECT_EQ(inst.A(0, 0), 2.0);
  EXPECT_EQ(inst.noise_std, 1.0);
}

TEST(LqrInstance, RejectsInvalid) {
  LqrInstance bad = make_lqr_tridiag_instance();
  bad.R = -Matrix::Identity(3, 3);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = make_lqr_tridiag_instance();
  bad.Q(0, 1) = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = make_lqr_tridiag_instance();
  bad.B = Matrix::Identity(2, 2);
  EXPECT_THROW(bad.validate(), ConfigError);
  std::stringstream short_file("2 1\n1 0 0 1\n");
  EXPECT_THROW(parse_lqr_instance(short_file), ConfigError);
}

TEST(MakeEnv, ByName) {
  EXPECT_EQ(make_env({.name = "lqr-tridiag"})->spec().state_dim, 3);
  EXPECT_EQ(make_env({.name = "point-mass"})->spec().action_dim, 2);
  EXPECT_EQ(make_env({.name = "quadratic", .horizon = 4})->spec().horizon, 4);
  EXPECT_THROW(make_env({.name = "mujoco"}), ConfigError);
  EXPECT_THROW(make_env({.name = "quadratic", .horizon = 0}), ConfigError);
}

}  // namespace
}  // namespace ars
