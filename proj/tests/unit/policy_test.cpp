#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "ars/policy.hpp"
#include "ars/rng.hpp"

namespace ars {
namespace {

double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

TEST(Act, V1IdentityGain) {
  PolicyParams p = PolicyParams::zero(Version::v1, 2, 2);
  p.gain = Matrix::Identity(2, 2);
  const Matrix delta = Matrix::Zero(2, 2);
  const Vector x = (Vector(2) << 3.0, -1.0).finished();
  EXPECT_EQ(act(p, &delta, +1, 0.1, x), x);
  EXPECT_EQ(act(p, nullptr, 0, 0.1, x), x);
}

TEST(Act, V2HandWhitening) {
  PolicyParams p = PolicyParams::zero(Version::v2, 1, 1);
  p.gain(0, 0) = 1.0;
  p.mean[0] = 5.0;
  p.var_diag[0] = 4.0;
  const Vector x = (Vector(1) << 9.0).finished();
  EXPECT_DOUBLE_EQ(act(p, nullptr, 0, 0.0, x)[0], 2.0);
}

TEST(Act, TinyVarianceCoordinateIsZero) {
  PolicyParams p = PolicyParams::zero(Version::v2, 1, 1);
  p.gain(0, 0) = 1.0;
  p.var_diag[0] = 1e-9;
  for (double v : {-3.0, 0.0, 1e6}) {
    const Vector x = (Vector(1) << v).finished();
    EXPECT_EQ(act(p, nullptr, 0, 0.0, x)[0], 0.0);
  }
}

TEST(Act, PerturbationUsesSignAndNu) {
  PolicyParams p = PolicyParams::zero(Version::v1, 1, 2);
  p.gain << 1.0, 2.0;
  Matrix delta(1, 2);
  delta << 10.0, -10.0;
  const Vector x = (Vector(2) << 1.0, 1.0).finished();
  EXPECT_DOUBLE_EQ(act(p, &delta, +1, 0.5, x)[0], 3.0);  // (1+5) + (2-5)
  EXPECT_DOUBLE_EQ(act(p, &delta, -1, 0.5, x)[0], 3.0);  // (1-5) + (2+5)
  const Vector e1 = (Vector(2) << 1.0, 0.0).finished();
  EXPECT_DOUBLE_EQ(act(p, &delta, +1, 0.5, e1)[0], 6.0);
  EXPECT_DOUBLE_EQ(act(p, &delta, -1, 0.5, e1)[0], -4.0);
}

TEST(Act, DimensionMismatchIsContractViolation) {
  PolicyParams p = PolicyParams::zero(Version::v1, 2, 3);
  const Matrix bad = Matrix::Zero(3, 3);
  EXPECT_THROW(act(p, &bad, +1, 0.1, Vector::Zero(3)), ContractViolation);
  EXPECT_THROW(act(p, nullptr, 0, 0.1, Vector::Zero(2)), ContractViolation);
  EXPECT_THROW(act(p, nullptr, +1, 0.1, Vector::Zero(3)), ContractViolation);
}

TEST(Act, LinearInState) {
  Stream rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    PolicyParams p = PolicyParams::zero(trial % 2 ? Version::v2 : Version::v1, 3, 4);
    for (Eigen::Index i = 0; i < p.gain.size(); ++i) p.gain.data()[i] = rng.normal();
    Matrix delta(3, 4);
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < 4; ++i) p.var_diag[i] = 0.1 + rng.next_double();
    // mean = 0 so whitening is linear.
    const Vector x1 = rng.normal_vector(4), x2 = rng.normal_vector(4);
    const Vector lhs = act(p, &delta, -1, 0.3, x1 + x2);
    const Vector rhs = act(p, &delta, -1, 0.3, x1) + act(p, &delta, -1, 0.3, x2);
    ASSERT_LT(rel_err(lhs, rhs), 1e-12);
  }
}

TEST(Act, WhiteningIdentity) {
  // (M + nu d) D (x - mu) == (M D + nu d D)(x - mu), D = diag(Sigma)^{-1/2}.
  Stream rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const Eigen::Index p = 1 + static_cast<Eigen::Index>(rng.uniform_below(4));
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.uniform_below(6));
    PolicyParams params = PolicyParams::zero(Version::v2, p, n);
    Matrix delta(p, n);
    for (Eigen::Index i = 0; i < params.gain.size(); ++i) params.gain.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] = rng.normal();
    params.mean = rng.normal_vector(n);
    for (Eigen::Index i = 0; i < n; ++i) params.var_diag[i] = 1e-8 + std::exp(4.0 * rng.normal());
    const double nu = 0.001 + rng.next_double();
    const Vector x = 10.0 * rng.normal_vector(n);

    const Vector whitened = act(params, &delta, +1, nu, x);
    const Eigen::DiagonalMatrix<double, Eigen::Dynamic> D = inverse_std(params.var_diag).asDiagonal();
    const Matrix m_tilde = params.gain * D;
    const Matrix d_tilde = delta * D;
    const Vector raw = (m_tilde + nu * d_tilde) * (x - params.mean);
    ASSERT_LT(rel_err(whitened, raw), 1e-12);
  }
}

TEST(RunningStat, HandComputedOneTwoThree) {
  RunningStat s;
  for (double v : {1.0, 2.0, 3.0}) s.push((Vector(1) << v).finished());
  EXPECT_EQ(s.count(), 3u);
  EXPECT_DOUBLE_EQ(s.mean()[0], 2.0);
  EXPECT_NEAR(s.variance()[0], 2.0 / 3.0, 1e-15);
}

TEST(RunningStat, ConstantStream) {
  RunningStat s(1);
  const Vector c = (Vector(1) << 3.7).finished();
  for (int i = 0; i < 1'000'000; ++i) s.push(c);
  EXPECT_DOUBLE_EQ(s.mean()[0], 3.7);
  EXPECT_EQ(s.variance()[0], 0.0);
}

TEST(RunningStat, MatchesTwoPassBatch) {
  Stream rng(5);
  std::vector<Vector> xs;
  RunningStat s;
  for (int i = 0; i < 10000; ++i) {
    xs.push_back(rng.normal_vector(3));
    s.push(xs.back());
  }
  Vector mean = Vector::Zero(3);
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Vector var = Vector::Zero(3);
  for (const auto& x : xs) var += (x - mean).array().square().matrix();
  var /= static_cast<double>(xs.size());
  EXPECT_LT((s.mean() - mean).cwiseAbs().maxCoeff(), 0.05);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(s.mean()[i], mean[i], 1e-10 * std::max(1.0, std::abs(mean[i])));
    EXPECT_NEAR(s.variance()[i], var[i], 1e-10 * var[i]);
    EXPECT_NEAR(var[i], 1.0, 0.05);
  }
}

TEST(RunningStat, MergeMatchesConcatenation) {
  Stream rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int total = 2 + static_cast<int>(rng.uniform_below(500));
    const int split = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(total + 1)));
    RunningStat all, left, right;
    for (int i = 0; i < total; ++i) {
      Vector x = 3.0 * rng.normal_vector(2);
      x[1] += 100.0;
      all.push(x);
      (i < split ? left : right).push(x);
    }
    left.merge(right);
    ASSERT_EQ(left.count(), all.count());
    for (Eigen::Index i = 0; i < 2; ++i) {
      ASSERT_NEAR(left.mean()[i], all.mean()[i], 1e-10 * std::abs(all.mean()[i]) + 1e-12);
      ASSERT_NEAR(left.variance()[i], all.variance()[i], 1e-10 * all.variance()[i]);
    }
  }
}

TEST(RunningStat, FreezeEmptyIsInert) {
  RunningStat s(2);
  auto [mu, sigma] = s.freeze();
  EXPECT_EQ(mu, Vector::Zero(2));
  EXPECT_EQ(sigma, Vector::Ones(2));
}

TEST(RunningStat, FreezeTwoStates) {
  RunningStat s;
  s.push((Vector(2) << 0.0, 10.0).finished());
  s.push((Vector(2) << 2.0, 10.0).finished());
  auto [mu, sigma] = s.freeze();
  EXPECT_DOUBLE_EQ(mu[0], 1.0);
  EXPECT_DOUBLE_EQ(mu[1], 10.0);
  EXPECT_DOUBLE_EQ(sigma[0], 1.0);
  EXPECT_DOUBLE_EQ(sigma[1], 0.0);

  // The zero-variance coordinate then contributes nothing to the action.
  PolicyParams p = PolicyParams::zero(Version::v2, 1, 2);
  p.gain << 1.0, 1.0;
  p.mean = mu;
  p.var_diag = sigma;
  const Vector x = (Vector(2) << 3.0, 500.0).finished();
  EXPECT_DOUBLE_EQ(act(p, nullptr, 0, 0.0, x)[0], 2.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Stream rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    PolicyParams p = PolicyParams::zero(static_cast<Version>(trial % 4), 2 + trial % 3, 3 + trial % 2);
    for (Eigen::Index i = 0; i < p.gain.size(); ++i) p.gain.data()[i] = rng.normal() * std::exp(20 * rng.normal());
    p.mean = rng.normal_vector(p.state_dim());
    for (Eigen::Index i = 0; i < p.state_dim(); ++i) p.var_diag[i] = rng.next_double();
    std::stringstream ss;
    save_checkpoint(ss, p);
    const PolicyParams q = load_checkpoint(ss);
    ASSERT_EQ(p, q);
  }
}

TEST(Checkpoint, RejectsWrongFormatVersion) {
  std::stringstream ss("ars-policy 99\nversion V1\ndims 1 1\ngain 0\nmean 0\nvar 1\n");
  EXPECT_THROW(load_checkpoint(ss), ConfigError);
  std::stringstream truncated("ars-policy 1\nversion V1\ndims 1 2\ngain 0\n");
  EXPECT_THROW(load_checkpoint(truncated), ConfigError);
}

TEST(Version, ParseAndPrint) {
  for (Version v : {Version::v1, Version::v1t, Version::v2, Version::v2t})
    EXPECT_EQ(parse_version(to_string(v)), v);
  EXPECT_EQ(parse_version("V2-t"), Version::v2t);
  EXPECT_THROW(parse_version("V3"), ConfigError);
}

}  // namespace
}  // namespace ars
