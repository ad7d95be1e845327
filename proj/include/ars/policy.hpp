#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>

#include "ars/error.hpp"
#include "ars/linalg.hpp"

namespace ars {

enum class Version { v1, v1t, v2, v2t };

inline constexpr bool uses_whitening(Version v) noexcept {
  return v == Version::v2 || v == Version::v2t;
}

inline constexpr bool allows_top_b(Version v) noexcept {
  return v == Version::v1t || v == Version::v2t;
}

inline std::string to_string(Version v) {
  switch (v) {
    case Version::v1: return "V1";
    case Version::v1t: return "V1t";
    case Version::v2: return "V2";
    case Version::v2t: return "V2t";
  }
  return "?";
}

inline Version parse_version(std::string_view s) {
  if (s == "V1" || s == "v1") return Version::v1;
  if (s == "V1t" || s == "V1-t" || s == "v1t" || s == "v1-t") return Version::v1t;
  if (s == "V2" || s == "v2") return Version::v2;
  if (s == "V2t" || s == "V2-t" || s == "v2t" || s == "v2-t") return Version::v2t;
  throw ConfigError("unknown ARS version '" + std::string(s) + "'");
}

/// Variances below this are treated as infinite: the whitened coordinate is 0.
inline constexpr double kMinWhiteningVariance = 1e-8;

/// Linear policy M (p x n) with the diagonal whitening statistics used by V2.
struct PolicyParams {
  Version version = Version::v1;
  Matrix gain;      // M, p x n
  Vector mean;      // mu, n
  Vector var_diag;  // diag(Sigma), n

  static PolicyParams zero(Version version, Eigen::Index action_dim, Eigen::Index state_dim) {
    if (action_dim <= 0 || state_dim <= 0) throw ConfigError("policy dimensions must be positive");
    return PolicyParams{version, Matrix::Zero(action_dim, state_dim), Vector::Zero(state_dim),
                        Vector::Ones(state_dim)};
  }

  Eigen::Index action_dim() const noexcept { return gain.rows(); }
  Eigen::Index state_dim() const noexcept { return gain.cols(); }

  friend bool operator==(const PolicyParams& a, const PolicyParams& b) {
    return a.version == b.version && a.gain.rows() == b.gain.rows() &&
           a.gain.cols() == b.gain.cols() && a.gain == b.gain && a.mean == b.mean &&
           a.var_diag == b.var_diag;
  }
};

/// Per-coordinate 1/sqrt(sigma), with 0 where sigma < kMinWhiteningVariance.
inline Vector inverse_std(const Vector& var_diag) {
  Vector inv(var_diag.size());
  for (Eigen::Index i = 0; i < var_diag.size(); ++i) {
    const double s = var_diag[i];
    if (!(s >= 0.0)) throw ContractViolation("whitening variance must be nonnegative");
    inv[i] = s < kMinWhiteningVariance ? 0.0 : 1.0 / std::sqrt(s);
  }
  return inv;
}

/// Policy with the perturbation and whitening folded in, ready for a rollout.
class LinearPolicy {
 public:
  LinearPolicy(const PolicyParams& params, const Matrix* delta, int sign, double nu)
      : whiten_(uses_whitening(params.version)) {
    if (sign < -1 || sign > 1) throw ContractViolation("perturbation sign must be -1, 0 or +1");
    if (params.mean.size() != params.state_dim() || params.var_diag.size() != params.state_dim())
      throw ContractViolation("whitening statistics do not match policy state dimension");
    if (sign != 0) {
      if (delta == nullptr) throw ContractViolation("perturbed policy requires a direction");
      if (delta->rows() != params.gain.rows() || delta->cols() != params.gain.cols())
        throw ContractViolation("perturbation shape does not match policy gain");
      effective_ = params.gain + (static_cast<double>(sign) * nu) * (*delta);
    } else {
      effective_ = params.gain;
    }
    if (whiten_) {
      mean_ = params.mean;
      inv_std_ = inverse_std(params.var_diag);
    }
  }

  Vector operator()(const Vector& x) const {
    if (x.size() != effective_.cols()) throw ContractViolation("state dimension mismatch in act");
    if (!whiten_) return effective_ * x;
    const Vector w = ((x - mean_).array() * inv_std_.array()).matrix();
    return effective_ * w;
  }

  const Matrix& effective_gain() const noexcept { return effective_; }

 private:
  bool whiten_;
  Matrix effective_;
  Vector mean_;
  Vector inv_std_;
};

/// V1: (M + sign*nu*delta) x.  V2: (M + sign*nu*delta) diag(Sigma)^{-1/2} (x - mu).
inline Vector act(const PolicyParams& params, const Matrix* delta, int sign, double nu,
                  const Vector& x) {
  return LinearPolicy(params, delta, sign, nu)(x);
}

/// One-pass per-coordinate mean and sum of squared deviations.
class RunningStat {
 public:
  RunningStat() = default;
  explicit RunningStat(Eigen::Index dim) : mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

  void push(const Vector& x) {
    if (count_ == 0 && mean_.size() == 0) {
      mean_ = Vector::Zero(x.size());
      m2_ = Vector::Zero(x.size());
    }
    if (x.size() != mean_.size()) throw ContractViolation("RunningStat: dimension mismatch");
    ++count_;
    const Vector delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += (delta.array() * (x - mean_).array()).matrix();
  }

  /// Combines with statistics of a disjoint batch (Chan et al. pairwise update).
  void merge(const RunningStat& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    if (other.mean_.size() != mean_.size()) throw ContractViolation("RunningStat: dimension mismatch");
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    const Vector delta = other.mean_ - mean_;
    mean_ += delta * (nb / n);
    m2_ += other.m2_ + (delta.array().square() * (na * nb / n)).matrix();
    count_ += other.count_;
  }

  std::uint64_t count() const noexcept { return count_; }
  Eigen::Index dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const Vector& m2() const noexcept { return m2_; }

  /// Population variance (divide by count).
  Vector variance() const {
    if (count_ == 0) return Vector::Ones(mean_.size());
    return m2_ / static_cast<double>(count_);
  }

  /// (mu, diag Sigma) for the next iteration; (0, 1) before any data.
  std::pair<Vector, Vector> freeze() const {
    if (count_ == 0) return {Vector::Zero(mean_.size()), Vector::Ones(mean_.size())};
    return {mean_, variance()};
  }

  friend bool operator==(const RunningStat& a, const RunningStat& b) {
    return a.count_ == b.count_ && a.mean_.size() == b.mean_.size() && a.mean_ == b.mean_ &&
           a.m2_ == b.m2_;
  }

 private:
  std::uint64_t count_ = 0;
  Vector mean_;
  Vector m2_;
};

// ---------------------------------------------------------------------------
// Checkpoint file
//
//   ars-policy 1
//   version V2
//   dims <p> <n>
//   gain <p*n hex floats, row-major>
//   mean <n hex floats>
//   var <n hex floats>
//
// Values are written with %a so a save/load cycle is bit-exact.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointFormat = 1;

namespace detail {

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_double(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') throw ConfigError("malformed number '" + token + "'");
  return v;
}

inline void expect_key(std::istream& in, std::string_view key) {
  std::string got;
  if (!(in >> got) || got != key)
    throw ConfigError("checkpoint: expected '" + std::string(key) + "', got '" + got + "'");
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const PolicyParams& params) {
  out << "ars-policy " << kCheckpointFormat << '\n';
  out << "version " << to_string(params.version) << '\n';
  out << "dims " << params.action_dim() << ' ' << params.state_dim() << '\n';
  out << "gain";
  for (Eigen::Index r = 0; r < params.gain.rows(); ++r)
    for (Eigen::Index c = 0; c < params.gain.cols(); ++c) out << ' ' << detail::hexfloat(params.gain(r, c));
  out << "\nmean";
  for (Eigen::Index i = 0; i < params.mean.size(); ++i) out << ' ' << detail::hexfloat(params.mean[i]);
  out << "\nvar";
  for (Eigen::Index i = 0; i < params.var_diag.size(); ++i)
    out << ' ' << detail::hexfloat(params.var_diag[i]);
  out << '\n';
}

inline PolicyParams load_checkpoint(std::istream& in) {
  detail::expect_key(in, "ars-policy");
  int format = 0;
  if (!(in >> format) || format != kCheckpointFormat)
    throw ConfigError("checkpoint: unsupported format version " + std::to_string(format));
  detail::expect_key(in, "version");
  std::string version;
  in >> version;
  detail::expect_key(in, "dims");
  Eigen::Index p = 0, n = 0;
  if (!(in >> p >> n) || p <= 0 || n <= 0) throw ConfigError("checkpoint: bad dimensions");
  PolicyParams params = PolicyParams::zero(parse_version(version), p, n);
  std::string token;
  detail::expect_key(in, "gain");
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!(in >> token)) throw ConfigError("checkpoint: truncated gain");
      params.gain(r, c) = detail::parse_double(token);
    }
  detail::expect_key(in, "mean");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(in >> token)) throw ConfigError("checkpoint: truncated mean");
    params.mean[i] = detail::parse_double(token);
  }
  detail::expect_key(in, "var");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(in >> token)) throw ConfigError("checkpoint: truncated var");
    params.var_diag[i] = detail::parse_double(token);
    if (params.var_diag[i] < 0.0) throw ConfigError("checkpoint: negative variance");
  }
  return params;
}

}  // namespace ars
