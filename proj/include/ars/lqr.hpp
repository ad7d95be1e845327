#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ars/env.hpp"
#include "ars/error.hpp"
#include "ars/linalg.hpp"

namespace ars::lqr {

inline constexpr double kDefaultTolerance = 1e-12;
inline constexpr long kDefaultMaxIterations = 1'000'000;
inline constexpr double kStabilityMargin = 1e-9;

struct RiccatiSolution {
  Matrix P;
  Matrix K_opt;  // u = K_opt x
  long iterations_used = 0;
  double residual = 0.0;  // |F(P) - P|_F
};

struct GainEvaluation {
  Matrix K;
  bool stable = false;
  double avg_cost = std::numeric_limits<double>::infinity();
  double relative_cost = std::numeric_limits<double>::infinity();
};

namespace detail {

inline Matrix riccati_gain(const Matrix& A, const Matrix& B, const Matrix& R, const Matrix& P) {
  const Matrix BtP = B.transpose() * P;
  return -(R + BtP * B).ldlt().solve(BtP * A);
}

// P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA, written as Q + A'P(A + BK).
inline Matrix riccati_map(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                          const Matrix& P) {
  const Matrix K = riccati_gain(A, B, R, P);
  Matrix next = Q + A.transpose() * P * (A + B * K);
  return 0.5 * (next + next.transpose());
}

}  // namespace detail

/// Discrete algebraic Riccati equation by value iteration from P0 = Q.
inline RiccatiSolution solve_riccati(const Matrix& A, const Matrix& B, const Matrix& Q,
                                     const Matrix& R, double tol = kDefaultTolerance,
                                     long max_iter = kDefaultMaxIterations) {
  Matrix P = Q;
  for (long it = 1; it <= max_iter; ++it) {
    Matrix next = detail::riccati_map(A, B, Q, R, P);
    if (!next.allFinite()) break;
    const double defect = (next - P).norm();
    P = std::move(next);
    if (defect <= tol) {
      RiccatiSolution sol;
      sol.residual = (detail::riccati_map(A, B, Q, R, P) - P).norm();
      sol.K_opt = detail::riccati_gain(A, B, R, P);
      sol.P = std::move(P);
      sol.iterations_used = it;
      return sol;
    }
  }
  throw SolverFailure("Riccati iteration did not converge within " + std::to_string(max_iter) +
                      " iterations");
}

inline RiccatiSolution solve_riccati(const LqrInstance& inst, double tol = kDefaultTolerance,
                                     long max_iter = kDefaultMaxIterations) {
  return solve_riccati(inst.A, inst.B, inst.Q, inst.R, tol, max_iter);
}

/// Largest eigenvalue modulus (dense nonsymmetric eigensolver).
inline double spectral_radius(const Matrix& M) {
  if (M.rows() != M.cols()) throw ContractViolation("spectral_radius: matrix must be square");
  if (!M.allFinite()) throw ContractViolation("spectral_radius: non-finite entries");
  if (M.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(M, false);
  if (solver.info() != Eigen::Success) throw SolverFailure("eigenvalue computation failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline Matrix closed_loop(const LqrInstance& inst, const Matrix& K) {
  if (K.rows() != inst.action_dim() || K.cols() != inst.state_dim())
    throw ContractViolation("gain shape does not match LQR instance");
  return inst.A + inst.B * K;
}

inline bool is_stabilizing(const LqrInstance& inst, const Matrix& K) {
  if (!K.allFinite()) return false;
  return spectral_radius(closed_loop(inst, K)) < 1.0 - kStabilityMargin;
}

/// Solves X = F X F' + S for stable F with the doubling iteration
/// X <- X + F_k X F_k', F_k <- F_k^2 (each sweep doubles the number of summed
/// terms of the series). Stops when the relative update falls below tol.
inline Matrix solve_lyapunov(const Matrix& F, const Matrix& S, double tol = kDefaultTolerance,
                             long max_iter = 200) {
  Matrix X = S;
  Matrix Fk = F;
  for (long it = 0; it < max_iter; ++it) {
    const Matrix increment = Fk * X * Fk.transpose();
    X += increment;
    X = 0.5 * (X + X.transpose());
    if (!X.allFinite()) break;
    if (increment.norm() <= tol * std::max(1.0, X.norm())) return X;
    Fk = Fk * Fk;
  }
  throw SolverFailure("Lyapunov iteration did not converge");
}

/// Infinite-horizon average cost of u = Kx under the instance's process noise;
/// +inf when K does not stabilize.
inline double average_cost(const LqrInstance& inst, const Matrix& K, double tol = kDefaultTolerance) {
  if (!is_stabilizing(inst, K)) return std::numeric_limits<double>::infinity();
  const double var = inst.noise_std * inst.noise_std;
  if (var == 0.0) return 0.0;
  const auto n = inst.state_dim();
  const Matrix X = solve_lyapunov(closed_loop(inst, K), var * Matrix::Identity(n, n), tol);
  return ((inst.Q + K.transpose() * inst.R * K) * X).trace();
}

/// Cost of K relative to the optimal gain. The ratio does not depend on the
/// noise scale, so it is computed with unit noise.
class GainEvaluator {
 public:
  explicit GainEvaluator(LqrInstance inst, double tol = kDefaultTolerance)
      : inst_(std::move(inst)), tol_(tol) {
    riccati_ = solve_riccati(inst_, tol_);
    unit_ = inst_;
    unit_.noise_std = 1.0;
    optimal_unit_cost_ = average_cost(unit_, riccati_.K_opt, tol_);
  }

  GainEvaluation evaluate(const Matrix& K) const {
    GainEvaluation ev;
    ev.K = K;
    ev.stable = is_stabilizing(inst_, K);
    if (!ev.stable) return ev;
    ev.avg_cost = average_cost(inst_, K, tol_);
    ev.relative_cost = average_cost(unit_, K, tol_) / optimal_unit_cost_;
    return ev;
  }

  const RiccatiSolution& riccati() const noexcept { return riccati_; }
  const LqrInstance& instance() const noexcept { return inst_; }

 private:
  LqrInstance inst_;
  LqrInstance unit_;
  double tol_;
  RiccatiSolution riccati_;
  double optimal_unit_cost_ = 0.0;
};

// ---------------------------------------------------------------------------
// Nominal (certainty-equivalent) control from data.
// ---------------------------------------------------------------------------

struct TransitionSample {
  Vector x;
  Vector u;
  Vector x_next;
};

struct SystemEstimate {
  Matrix A;
  Matrix B;
};

/// Least-squares [A B] minimizing sum |x' - A x - B u|^2.
inline SystemEstimate estimate_dynamics(std::span<const TransitionSample> data, Eigen::Index n,
                                        Eigen::Index p) {
  const auto m = static_cast<Eigen::Index>(data.size());
  if (m < n + p)
    throw SingularEstimate("need at least " + std::to_string(n + p) + " transitions, got " +
                           std::to_string(m));
  Matrix Z(m, n + p);
  Matrix Y(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& s = data[static_cast<std::size_t>(i)];
    if (s.x.size() != n || s.u.size() != p || s.x_next.size() != n)
      throw ContractViolation("transition sample dimensions do not match");
    Z.row(i).head(n) = s.x.transpose();
    Z.row(i).tail(p) = s.u.transpose();
    Y.row(i) = s.x_next.transpose();
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(Z);
  qr.setThreshold(1e-10);
  if (qr.rank() < n + p) throw SingularEstimate("regression design is rank deficient");
  const Matrix theta = qr.solve(Y);  // (n + p) x n, theta' = [A B]
  return {theta.topRows(n).transpose(), theta.bottomRows(p).transpose()};
}

/// Estimates (A, B), solves the Riccati equation on the estimate, and
/// evaluates the resulting gain on the true system. An estimate for which the
/// Riccati iteration fails yields an unstable evaluation with a zero gain.
inline GainEvaluation nominal_synthesis(std::span<const TransitionSample> data,
                                        const GainEvaluator& truth) {
  const auto& inst = truth.instance();
  const SystemEstimate est = estimate_dynamics(data, inst.state_dim(), inst.action_dim());
  Matrix K;
  try {
    K = solve_riccati(est.A, est.B, inst.Q, inst.R).K_opt;
  } catch (const SolverFailure&) {
    GainEvaluation ev;
    ev.K = Matrix::Zero(inst.action_dim(), inst.state_dim());
    return ev;
  }
  return truth.evaluate(K);
}

/// Identification data: `rollouts` trajectories of `length` steps driven by
/// u ~ N(0, I), seeded from `seed`.
inline std::vector<TransitionSample> collect_identification_data(const LqrInstance& inst,
                                                                 int rollouts, int length,
                                                                 std::uint64_t seed) {
  std::vector<TransitionSample> data;
  data.reserve(static_cast<std::size_t>(rollouts) * static_cast<std::size_t>(length));
  LqrEnv env(inst, "lqr");
  Stream inputs(mix64(seed ^ 0x5bd1e995ULL));
  for (int r = 0; r < rollouts; ++r) {
    Vector x = env.reset(mix64(seed + static_cast<std::uint64_t>(r) * kGolden));
    for (int t = 0; t < length; ++t) {
      Vector u = inputs.normal_vector(inst.action_dim());
      Transition tr = env.step(u);
      data.push_back({x, u, tr.next_state});
      x = std::move(tr.next_state);
    }
  }
  return data;
}

}  // namespace ars::lqr
