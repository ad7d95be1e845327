#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ars/env.hpp"
#include "ars/lqr.hpp"
#include "ars/rng.hpp"

namespace ars::lqr {
namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

// Largest root of p^2 - 4p - 1 = 0 by bisection, the fixed point of the
// scalar Riccati map for a = 2, b = q = r = 1.
double bisect_scalar_riccati() {
  double lo = 1.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid * mid - 4.0 * mid - 1.0 < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(Riccati, ScalarClosedForm) {
  const auto sol = solve_riccati(scalar(2.0), scalar(1.0), scalar(1.0), scalar(1.0));
  const double expected = 2.0 + std::sqrt(5.0);
  EXPECT_NEAR(sol.P(0, 0), expected, 1e-10);
  EXPECT_NEAR(sol.P(0, 0), bisect_scalar_riccati(), 1e-10);
  // K = -abp / (r + b^2 p)
  EXPECT_NEAR(sol.K_opt(0, 0), -2.0 * expected / (1.0 + expected), 1e-10);
  EXPECT_LE(sol.residual, 1e-10);
}

TEST(Riccati, ThreeStateInstanceSatisfiesEquation) {
  const LqrInstance inst = make_lqr_tridiag_instance();
  const auto sol = solve_riccati(inst);
  const Matrix& P = sol.P;
  const Matrix BtPB = inst.R + inst.B.transpose() * P * inst.B;
  const Matrix rhs = inst.Q + inst.A.transpose() * P * inst.A -
                     inst.A.transpose() * P * inst.B * BtPB.inverse() * inst.B.transpose() * P * inst.A;
  EXPECT_LT((rhs - P).norm() / P.norm(), 1e-9);
  EXPECT_LT((P - P.transpose()).norm(), 1e-12);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(P).eigenvalues().minCoeff(), 0.0);
  EXPECT_TRUE(is_stabilizing(inst, sol.K_opt));
}

TEST(Riccati, UncontrollableUnstableSystemFails) {
  Matrix A = Matrix::Identity(2, 2) * 1.5;
  Matrix B(2, 1);
  B << 1.0, 0.0;  // second mode unstable and unreachable
  EXPECT_THROW(solve_riccati(A, B, Matrix::Identity(2, 2), scalar(1.0), 1e-12, 5000), SolverFailure);
}

TEST(SpectralRadius, TridiagonalEigenvalues) {
  const LqrInstance inst = make_lqr_tridiag_instance();
  double expected = 0.0;
  for (int k = 1; k <= 3; ++k)
    expected = std::max(expected, std::abs(1.01 + 0.02 * std::cos(k * std::numbers::pi / 4.0)));
  EXPECT_NEAR(spectral_radius(inst.A), expected, 1e-12);
  EXPECT_NEAR(expected, 1.0241421356, 1e-9);
}

TEST(SpectralRadius, AgreesWithPowerIteration) {
  Stream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix M(4, 4);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
    M = M * M.transpose();  // symmetric PSD: power iteration converges to rho
    Vector v = Vector::Ones(4);
    double est = 0.0;
    for (int it = 0; it < 5000; ++it) {
      Vector w = M * v;
      est = w.norm() / v.norm();
      v = w.normalized();
    }
    EXPECT_NEAR(spectral_radius(M), est, 1e-6 * est);
  }
}

TEST(Lyapunov, ScalarSeries) {
  // x = f^2 x + s  =>  x = s / (1 - f^2)
  const Matrix X = solve_lyapunov(scalar(0.9), scalar(2.0));
  EXPECT_NEAR(X(0, 0), 2.0 / (1.0 - 0.81), 1e-9);
}

TEST(Lyapunov, SatisfiesEquation) {
  const LqrInstance inst = make_lqr_tridiag_instance();
  const Matrix F = closed_loop(inst, -0.5 * Matrix::Identity(3, 3));
  const Matrix X = solve_lyapunov(F, Matrix::Identity(3, 3));
  EXPECT_LT((F * X * F.transpose() + Matrix::Identity(3, 3) - X).norm(), 1e-9);
}

TEST(AverageCost, OptimalGainIsMinimal) {
  const LqrInstance inst = make_lqr_tridiag_instance();
  const GainEvaluator ev(inst);
  const Matrix K = ev.riccati().K_opt;
  const auto best = ev.evaluate(K);
  EXPECT_TRUE(best.stable);
  EXPECT_NEAR(best.relative_cost, 1.0, 1e-9);
  // With unit noise the optimal average cost equals trace(P).
  EXPECT_NEAR(best.avg_cost, ev.riccati().P.trace(), 1e-8 * best.avg_cost);
  Stream rng(6);
  for (int i = 0; i < 50; ++i) {
    Matrix D(3, 3);
    for (Eigen::Index k = 0; k < 9; ++k) D.data()[k] = 0.05 * rng.normal();
    const auto other = ev.evaluate(K + D);
    if (other.stable) EXPECT_GE(other.relative_cost, 1.0 - 1e-12);
  }
}

TEST(AverageCost, UnstableGainIsCensored) {
  const GainEvaluator ev(make_lqr_tridiag_instance());
  const auto zero = ev.evaluate(Matrix::Zero(3, 3));
  EXPECT_FALSE(zero.stable);
  EXPECT_TRUE(std::isinf(zero.avg_cost));
  EXPECT_TRUE(std::isinf(zero.relative_cost));
}

TEST(AverageCost, RelativeCostIgnoresNoiseScale) {
  const Matrix K = -0.6 * Matrix::Identity(3, 3);
  const double a = GainEvaluator(make_lqr_tridiag_instance(1.0)).evaluate(K).relative_cost;
  const double b = GainEvaluator(make_lqr_tridiag_instance(0.01)).evaluate(K).relative_cost;
  EXPECT_NEAR(a, b, 1e-9 * a);
}

TEST(AverageCost, MatchesMonteCarlo) {
  const LqrInstance inst = make_lqr_tridiag_instance();
  Stream rng(12);
  int checked = 0;
  while (checked < 10) {
    Matrix K = -Matrix::Identity(3, 3) * (0.2 + 0.6 * rng.next_double());
    for (Eigen::Index k = 0; k < 9; ++k) K.data()[k] += 0.05 * rng.normal();
    if (!is_stabilizing(inst, K)) continue;
    const double exact = average_cost(inst, K);
    LqrEnv env(inst);
    double total = 0.0;
    long steps = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Vector x = env.reset(1000 * static_cast<std::uint64_t>(checked) + seed);
      for (int t = 0; t < 10000; ++t) {
        const Vector u = K * x;
        const Transition tr = env.step(u);
        if (t >= 200) {  // discard the transient
          total -= tr.reward;
          ++steps;
        }
        x = tr.next_state;
      }
    }
    EXPECT_NEAR(total / static_cast<double>(steps), exact, 0.05 * exact) << "gain " << checked;
    ++checked;
  }
}

TEST(Nominal, ExactDataRecoversSystem) {
  LqrInstance inst = make_lqr_tridiag_instance(0.0, 1.0);
  const auto data = collect_identification_data(inst, 5, 10, 3);
  const auto est = estimate_dynamics(data, 3, 3);
  EXPECT_LT((est.A - inst.A).norm(), 1e-8);
  EXPECT_LT((est.B - inst.B).norm(), 1e-8);
  const GainEvaluator truth(inst);
  const auto ev = nominal_synthesis(data, truth);
  EXPECT_TRUE(ev.stable);
  EXPECT_NEAR(ev.relative_cost, 1.0, 1e-6);
}

TEST(Nominal, TooFewSamplesIsSingular) {
  const LqrInstance inst = make_lqr_tridiag_instance();
  const auto data = collect_identification_data(inst, 1, 5, 0);
  EXPECT_THROW(estimate_dynamics(data, 3, 3), SingularEstimate);
  std::vector<TransitionSample> repeated(10, data.front());
  EXPECT_THROW(estimate_dynamics(repeated, 3, 3), SingularEstimate);
}

TEST(Nominal, MoreDataStabilizesMoreOften) {
  const LqrInstance inst = make_lqr_tridiag_instance();
  const GainEvaluator truth(inst);
  auto frequency = [&](int rollouts) {
    int stable = 0;
    for (int trial = 0; trial < 40; ++trial) {
      const auto data = collect_identification_data(inst, rollouts, 10, 500 + trial);
      stable += nominal_synthesis(data, truth).stable ? 1 : 0;
    }
    return stable / 40.0;
  };
  const double few = frequency(1);
  const double many = frequency(100);
  EXPECT_LT(few, 0.5);
  EXPECT_EQ(many, 1.0);
}

}  // namespace
}  // namespace ars::lqr
