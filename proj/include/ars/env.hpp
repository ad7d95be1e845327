#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ars/error.hpp"
#include "ars/linalg.hpp"
#include "ars/policy.hpp"
#include "ars/rng.hpp"

namespace ars {

struct EnvSpec {
  std::string name;
  Eigen::Index state_dim = 0;
  Eigen::Index action_dim = 0;
  int horizon = 1;  // default training horizon
  bool can_terminate = false;
  bool whitening_supported = true;
};

struct Transition {
  Vector next_state;
  double reward = 0.0;
  bool terminated = false;
};

/// Episodic environment. reset() fully determines the episode's randomness
/// from the seed; rewards are to be maximized.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvSpec spec() const = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual Transition step(const Vector& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// The environment evaluation rollouts run against. Training-only reward
  /// shaping wrappers return their inner environment here.
  virtual const Environment& evaluation_env() const { return *this; }
};

struct TraceStep {
  Vector state;
  Vector action;
  double reward = 0.0;
};

struct RolloutResult {
  double total_reward = 0.0;
  int steps_used = 0;
  bool diverged = false;
  /// Reward charged for the steps a diverged rollout did not run. Included
  /// in total_reward, absent from the trace.
  double tail_penalty = 0.0;
  std::optional<std::vector<TraceStep>> trace;

  friend bool operator==(const RolloutResult& a, const RolloutResult& b) {
    if (a.total_reward != b.total_reward || a.steps_used != b.steps_used ||
        a.diverged != b.diverged || a.tail_penalty != b.tail_penalty ||
        a.trace.has_value() != b.trace.has_value())
      return false;
    if (!a.trace) return true;
    if (a.trace->size() != b.trace->size()) return false;
    for (std::size_t i = 0; i < a.trace->size(); ++i) {
      const auto& s = (*a.trace)[i];
      const auto& t = (*b.trace)[i];
      if (s.reward != t.reward || s.state != t.state || s.action != t.action) return false;
    }
    return true;
  }
};

inline constexpr double kDivergenceNorm = 1e10;

/// Runs one episode of at most `horizon` steps. States the policy acts on are
/// pushed into `visited` when given. A rollout whose state or action becomes
/// non-finite, or whose state norm exceeds kDivergenceNorm, stops early and is
/// marked diverged; its unrun steps are charged the worst step reward seen.
template <class Policy>
RolloutResult rollout(Environment& env, const Policy& policy, std::uint64_t seed, int horizon,
                      bool record_trace = false, RunningStat* visited = nullptr) {
  RolloutResult result;
  if (record_trace) result.trace.emplace();
  if (horizon <= 0) return result;

  Vector x = env.reset(seed);
  double worst = std::numeric_limits<double>::infinity();
  for (int t = 0; t < horizon; ++t) {
    Vector u = policy(x);
    if (!u.allFinite()) {
      result.diverged = true;
      break;
    }
    if (visited) visited->push(x);
    Transition tr = env.step(u);
    ++result.steps_used;
    if (!std::isfinite(tr.reward)) {
      result.diverged = true;
      break;
    }
    result.total_reward += tr.reward;
    worst = std::min(worst, tr.reward);
    if (record_trace) result.trace->push_back({std::move(x), std::move(u), tr.reward});
    if (tr.terminated) break;
    x = std::move(tr.next_state);
    if (!x.allFinite() || x.norm() > kDivergenceNorm) {
      result.diverged = true;
      break;
    }
  }
  if (result.diverged && result.steps_used < horizon) {
    const double per_step = std::isfinite(worst) ? worst : 0.0;
    result.tail_penalty = per_step * static_cast<double>(horizon - result.steps_used);
    result.total_reward += result.tail_penalty;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Linear quadratic regulator
// ---------------------------------------------------------------------------

/// x_{t+1} = A x_t + B u_t + w_t, cost x'Qx + u'Ru, w_t ~ N(0, noise_std^2 I),
/// x_0 ~ N(0, x0_std^2 I).
struct LqrInstance {
  Matrix A;
  Matrix B;
  Matrix Q;
  Matrix R;
  double noise_std = 1.0;
  double x0_std = 1.0;

  Eigen::Index state_dim() const noexcept { return A.rows(); }
  Eigen::Index action_dim() const noexcept { return B.cols(); }

  /// Throws ConfigError unless shapes agree, Q is symmetric PSD and R is
  /// symmetric PD.
  void validate() const {
    const auto n = A.rows();
    const auto p = B.cols();
    if (n <= 0 || p <= 0 || A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
        R.rows() != p || R.cols() != p)
      throw ConfigError("LQR instance: inconsistent matrix shapes");
    if (!A.allFinite() || !B.allFinite() || !Q.allFinite() || !R.allFinite())
      throw ConfigError("LQR instance: non-finite entries");
    if (!(noise_std >= 0.0) || !(x0_std >= 0.0))
      throw ConfigError("LQR instance: noise scales must be nonnegative");
    auto symmetric = [](const Matrix& m) {
      return (m - m.transpose()).norm() <= 1e-10 * std::max(1.0, m.norm());
    };
    if (!symmetric(Q)) throw ConfigError("LQR instance: Q must be symmetric");
    if (!symmetric(R)) throw ConfigError("LQR instance: R must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eq(Q, Eigen::EigenvaluesOnly);
    if (eq.eigenvalues().minCoeff() < -1e-10) throw ConfigError("LQR instance: Q must be PSD");
    Eigen::SelfAdjointEigenSolver<Matrix> er(R, Eigen::EigenvaluesOnly);
    if (er.eigenvalues().minCoeff() < 1e-10) throw ConfigError("LQR instance: R must be PD");
  }
};

/// The 3-state marginally unstable instance: A tridiagonal with 1.01 on the
/// diagonal and 0.01 off it, B = I, Q = 1e-3 I, R = I.
inline LqrInstance make_lqr_tridiag_instance(double noise_std = 1.0, double x0_std = 1.0) {
  LqrInstance inst;
  inst.A.resize(3, 3);
  inst.A << 1.01, 0.01, 0.00,
            0.01, 1.01, 0.01,
            0.00, 0.01, 1.01;
  inst.B = Matrix::Identity(3, 3);
  inst.Q = 1e-3 * Matrix::Identity(3, 3);
  inst.R = Matrix::Identity(3, 3);
  inst.noise_std = noise_std;
  inst.x0_std = x0_std;
  return inst;
}

/// Negated stage cost, -(x'Qx + u'Ru).
inline double lqr_step_reward(const Vector& x, const Vector& u, const Matrix& Q, const Matrix& R) {
  if (x.size() != Q.rows() || u.size() != R.rows()) throw ContractViolation("lqr_step_reward: dims");
  return -(x.dot(Q * x) + u.dot(R * u));
}

inline constexpr int kLqrDefaultHorizon = 300;

class LqrEnv final : public Environment {
 public:
  explicit LqrEnv(LqrInstance inst, std::string name = "lqr-tridiag",
                  int horizon = kLqrDefaultHorizon)
      : inst_(std::move(inst)), name_(std::move(name)), horizon_(horizon), rng_(0) {
    inst_.validate();
  }

  EnvSpec spec() const override {
    return {name_, inst_.state_dim(), inst_.action_dim(), horizon_, false, false};
  }

  Vector reset(std::uint64_t seed) override {
    rng_ = Stream(seed);
    x_ = inst_.x0_std * rng_.normal_vector(inst_.state_dim());
    return x_;
  }

  Transition step(const Vector& u) override {
    if (u.size() != inst_.action_dim()) throw ContractViolation("LQR step: action dimension");
    Transition tr;
    tr.reward = lqr_step_reward(x_, u, inst_.Q, inst_.R);
    x_ = inst_.A * x_ + inst_.B * u;
    if (inst_.noise_std > 0.0) x_ += inst_.noise_std * rng_.normal_vector(inst_.state_dim());
    tr.next_state = x_;
    return tr;
  }

  std::unique_ptr<Environment> clone() const override { return std::make_unique<LqrEnv>(*this); }

  const LqrInstance& instance() const noexcept { return inst_; }

 private:
  LqrInstance inst_;
  std::string name_;
  int horizon_;
  Stream rng_;
  Vector x_;
};

/// Plain-text LQR instance: '#' starts a comment; the first two numbers are
/// n and p, followed by A (n x n), B (n x p), Q (n x n) and R (p x p), all
/// row-major, then optionally noise_std and x0_std.
inline LqrInstance parse_lqr_instance(std::istream& in) {
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) values.push_back(detail::parse_double(tok));
  }
  if (values.size() < 2) throw ConfigError("LQR file: missing dimension header");
  const double nd = values[0], pd = values[1];
  if (nd < 1 || pd < 1 || nd != std::floor(nd) || pd != std::floor(pd))
    throw ConfigError("LQR file: dimensions must be positive integers");
  const auto n = static_cast<Eigen::Index>(nd);
  const auto p = static_cast<Eigen::Index>(pd);
  const std::size_t body = static_cast<std::size_t>(2 * n * n + n * p + p * p);
  const std::size_t have = values.size() - 2;
  if (have != body && have != body + 1 && have != body + 2)
    throw ConfigError("LQR file: expected " + std::to_string(body) + " matrix entries, found " +
                      std::to_string(have));
  std::size_t at = 2;
  auto read = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[at++];
    return m;
  };
  LqrInstance inst;
  inst.A = read(n, n);
  inst.B = read(n, p);
  inst.Q = read(n, n);
  inst.R = read(p, p);
  if (at < values.size()) inst.noise_std = values[at++];
  if (at < values.size()) inst.x0_std = values[at++];
  inst.validate();
  return inst;
}

inline LqrInstance load_lqr_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open LQR file '" + path + "'");
  return parse_lqr_instance(in);
}

inline void write_lqr_instance(std::ostream& out, const LqrInstance& inst) {
  out << "# n p, then A, B, Q, R row-major, then noise_std x0_std\n";
  out << inst.state_dim() << ' ' << inst.action_dim() << '\n';
  for (const Matrix* m : {&inst.A, &inst.B, &inst.Q, &inst.R}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) out << (c ? " " : "") << detail::hexfloat((*m)(r, c));
      out << '\n';
    }
  }
  out << detail::hexfloat(inst.noise_std) << ' ' << detail::hexfloat(inst.x0_std) << '\n';
}

// ---------------------------------------------------------------------------
// Deterministic quadratic toy: x <- x + B u, reward -|x_{t+1}|^2. The initial
// state is drawn once from the construction seed, so every rollout of a given
// policy returns the same reward.
// ---------------------------------------------------------------------------

inline constexpr int kQuadraticDefaultHorizon = 10;

class QuadraticEnv final : public Environment {
 public:
  QuadraticEnv(Matrix input_matrix, int horizon = kQuadraticDefaultHorizon,
               std::uint64_t initial_state_seed = 0)
      : input_(std::move(input_matrix)), horizon_(horizon) {
    if (input_.rows() <= 0 || input_.cols() <= 0 || !input_.allFinite())
      throw ConfigError("quadratic env: input matrix must be non-empty and finite");
    if (horizon_ < 1) throw ConfigError("quadratic env: horizon must be positive");
    Stream rng(initial_state_seed);
    x0_ = rng.normal_vector(input_.rows());
  }

  EnvSpec spec() const override {
    return {"quadratic", input_.rows(), input_.cols(), horizon_, false, true};
  }

  Vector reset(std::uint64_t) override {
    x_ = x0_;
    return x_;
  }

  Transition step(const Vector& u) override {
    if (u.size() != input_.cols()) throw ContractViolation("quadratic step: action dimension");
    x_ += input_ * u;
    return {x_, -x_.squaredNorm(), false};
  }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<QuadraticEnv>(*this);
  }

  const Vector& initial_state() const noexcept { return x0_; }

 private:
  Matrix input_;
  int horizon_;
  Vector x0_;
  Vector x_;
};

/// n-state, p-input quadratic env whose input matrix is the leading n x p
/// block of the identity.
inline std::unique_ptr<Environment> make_quadratic_env(Eigen::Index n, Eigen::Index p,
                                                       int horizon = kQuadraticDefaultHorizon) {
  if (n <= 0 || p <= 0) throw ConfigError("quadratic env: dimensions must be positive");
  return std::make_unique<QuadraticEnv>(Matrix::Identity(n, p), horizon);
}

inline std::unique_ptr<Environment> make_quadratic_env(Matrix input_matrix,
                                                       int horizon = kQuadraticDefaultHorizon) {
  return std::make_unique<QuadraticEnv>(std::move(input_matrix), horizon);
}

// ---------------------------------------------------------------------------
// Point mass in the plane. State (px, py, vx, vy), action (ax, ay).
// ---------------------------------------------------------------------------

struct PointMassConfig {
  double dt = 0.1;
  double bound = 5.0;           // episode ends once |position| exceeds this
  double survival_bonus = 1.0;  // added to every step's reward
  double position_weight = 0.1;
  double control_weight = 0.01;
  double init_position_std = 1.0;
  double accel_noise_std = 0.1;
  int horizon = 200;
};

class PointMassEnv final : public Environment {
 public:
  explicit PointMassEnv(PointMassConfig cfg = {}) : cfg_(cfg), rng_(0), x_(Vector::Zero(4)) {
    if (!(cfg_.dt > 0.0) || !(cfg_.bound > 0.0) || cfg_.horizon < 1)
      throw ConfigError("point-mass env: dt, bound and horizon must be positive");
  }

  EnvSpec spec() const override { return {"point-mass", 4, 2, cfg_.horizon, true, true}; }

  Vector reset(std::uint64_t seed) override {
    rng_ = Stream(seed);
    x_.setZero();
    if (cfg_.init_position_std > 0.0) {
      x_[0] = cfg_.init_position_std * rng_.normal();
      x_[1] = cfg_.init_position_std * rng_.normal();
    }
    return x_;
  }

  Transition step(const Vector& u) override {
    if (u.size() != 2) throw ContractViolation("point-mass step: action dimension");
    Vector accel = u;
    if (cfg_.accel_noise_std > 0.0) {
      accel[0] += cfg_.accel_noise_std * rng_.normal();
      accel[1] += cfg_.accel_noise_std * rng_.normal();
    }
    x_.segment<2>(2) += cfg_.dt * accel;
    x_.segment<2>(0) += cfg_.dt * x_.segment<2>(2);
    const double task = -cfg_.position_weight * x_.head<2>().squaredNorm() -
                        cfg_.control_weight * u.squaredNorm();
    const bool out = x_.head<2>().norm() > cfg_.bound;
    return {x_, task + cfg_.survival_bonus, out};
  }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<PointMassEnv>(*this);
  }

  const PointMassConfig& config() const noexcept { return cfg_; }

 private:
  PointMassConfig cfg_;
  Stream rng_;
  Vector x_;
};

inline std::unique_ptr<Environment> make_point_mass_env(PointMassConfig cfg = {}) {
  return std::make_unique<PointMassEnv>(cfg);
}

// ---------------------------------------------------------------------------
// Training-time survival bonus removal.
// ---------------------------------------------------------------------------

class SubtractBonusEnv final : public Environment {
 public:
  SubtractBonusEnv(std::unique_ptr<Environment> inner, double bonus)
      : inner_(std::move(inner)), bonus_(bonus) {
    if (!inner_) throw ConfigError("bonus wrapper: null environment");
    if (!(bonus_ >= 0.0)) throw ConfigError("bonus wrapper: bonus must be nonnegative");
  }

  SubtractBonusEnv(const SubtractBonusEnv& other)
      : inner_(other.inner_->clone()), bonus_(other.bonus_) {}

  EnvSpec spec() const override { return inner_->spec(); }
  Vector reset(std::uint64_t seed) override { return inner_->reset(seed); }

  Transition step(const Vector& u) override {
    Transition tr = inner_->step(u);
    tr.reward -= bonus_;
    return tr;
  }

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<SubtractBonusEnv>(*this);
  }

  const Environment& evaluation_env() const override { return inner_->evaluation_env(); }

  double bonus() const noexcept { return bonus_; }

 private:
  std::unique_ptr<Environment> inner_;
  double bonus_;
};

inline std::unique_ptr<Environment> subtract_bonus_wrapper(std::unique_ptr<Environment> env,
                                                           double bonus_per_step) {
  return std::make_unique<SubtractBonusEnv>(std::move(env), bonus_per_step);
}

// ---------------------------------------------------------------------------
// Construction by name.
// ---------------------------------------------------------------------------

struct EnvOptions {
  std::string name = "quadratic";
  int quadratic_state_dim = 2;
  int quadratic_action_dim = 2;
  std::string lqr_file;             // used when name == "lqr-file"
  std::optional<double> lqr_noise_std;
  std::optional<int> horizon;       // overrides the env's default horizon
  std::optional<double> subtract_bonus;  // training-time bonus removal
};

inline std::unique_ptr<Environment> make_env(const EnvOptions& opt) {
  std::unique_ptr<Environment> env;
  if (opt.name == "lqr-tridiag" || opt.name == "lqr-file") {
    LqrInstance inst =
        opt.name == "lqr-tridiag" ? make_lqr_tridiag_instance() : load_lqr_instance(opt.lqr_file);
    if (opt.lqr_noise_std) inst.noise_std = *opt.lqr_noise_std;
    env = std::make_unique<LqrEnv>(std::move(inst), opt.name, opt.horizon.value_or(kLqrDefaultHorizon));
  } else if (opt.name == "quadratic") {
    env = make_quadratic_env(opt.quadratic_state_dim, opt.quadratic_action_dim,
                             opt.horizon.value_or(kQuadraticDefaultHorizon));
  } else if (opt.name == "point-mass") {
    PointMassConfig cfg;
    if (opt.horizon) cfg.horizon = *opt.horizon;
    env = make_point_mass_env(cfg);
  } else {
    throw ConfigError("unknown environment '" + opt.name +
                      "' (expected lqr-tridiag, lqr-file, quadratic or point-mass)");
  }
  if (opt.horizon && *opt.horizon < 1) throw ConfigError("horizon must be at least 1");
  if (opt.subtract_bonus && *opt.subtract_bonus > 0.0)
    env = subtract_bonus_wrapper(std::move(env), *opt.subtract_bonus);
  return env;
}

}  // namespace ars
