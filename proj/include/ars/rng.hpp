#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ars/error.hpp"
#include "ars/linalg.hpp"

namespace ars {

// Stafford variant 13 finalizer, as used by SplitMix64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Counter-based generator: output i is mix64(key + (i + 1) * golden). Two
/// streams built from the same key produce identical sequences on every
/// platform, independent of the standard library.
class Stream {
 public:
  explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform on [0, 1) with 53 random bits.
  double next_double() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound), unbiased by rejection.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound == 0) throw ContractViolation("uniform_below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via the Box-Muller transform. Values are produced in
  /// pairs (cos branch first, then sin branch).
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class StreamLabel : std::uint64_t {
  noise_table = 1,
  direction_index = 2,
  env_instance = 3,
  evaluation = 4,
  sweep_seeds = 5,
};

inline std::string to_string(StreamLabel label) {
  switch (label) {
    case StreamLabel::noise_table: return "noise_table";
    case StreamLabel::direction_index: return "direction_index";
    case StreamLabel::env_instance: return "env_instance";
    case StreamLabel::evaluation: return "evaluation";
    case StreamLabel::sweep_seeds: return "sweep_seeds";
  }
  return "unknown";
}

/// Every random quantity of a run is derived from one integer. Derived seeds
/// are hashes of (master seed, label, coordinates); no stream's output depends
/// on how many values another stream has produced.
class SeedHierarchy {
 public:
  explicit constexpr SeedHierarchy(std::uint64_t master_seed) noexcept : master_(master_seed) {}

  std::uint64_t master_seed() const noexcept { return master_; }

  std::uint64_t seed(StreamLabel label, std::uint64_t a = 0, std::uint64_t b = 0,
                     std::uint64_t c = 0) const noexcept {
    std::uint64_t h = mix64(master_ ^ 0x6a09e667f3bcc909ULL);
    h = mix64(h + kGolden * static_cast<std::uint64_t>(label));
    h = mix64(h ^ (a + 0x3c6ef372fe94f82bULL));
    h = mix64(h ^ (b + 0xa54ff53a5f1d36f1ULL));
    h = mix64(h ^ (c + 0x510e527fade682d1ULL));
    return h;
  }

  Stream stream(StreamLabel label, std::uint64_t a = 0, std::uint64_t b = 0,
                std::uint64_t c = 0) const noexcept {
    return Stream(seed(label, a, b, c));
  }

  std::uint64_t noise_table_seed() const noexcept { return seed(StreamLabel::noise_table); }

  /// Stream of direction start indices for training iteration j.
  Stream direction_stream(std::uint64_t iteration) const noexcept {
    return stream(StreamLabel::direction_index, iteration);
  }

  /// Environment seed for the training rollout (iteration, direction, sign).
  std::uint64_t training_rollout_seed(std::uint64_t iteration, std::uint64_t direction,
                                      int sign) const noexcept {
    return seed(StreamLabel::env_instance, iteration, direction, sign > 0 ? 1 : 2);
  }

  /// Environment seed for evaluation rollout `episode` at iteration j.
  std::uint64_t evaluation_rollout_seed(std::uint64_t iteration,
                                        std::uint64_t episode) const noexcept {
    return seed(StreamLabel::evaluation, iteration, episode);
  }

 private:
  std::uint64_t master_;
};

inline constexpr std::size_t kDefaultTableLength = 25'000'000;

/// Immutable block of i.i.d. standard-normal values. Perturbations are
/// addressed by a start index into the block.
class NoiseTable {
 public:
  static NoiseTable build(std::uint64_t fill_seed, std::size_t length) {
    if (length == 0) throw ConfigError("noise table length must be positive");
    NoiseTable table;
    table.fill_seed_ = fill_seed;
    table.values_.resize(length);
    Stream stream(fill_seed);
    for (double& v : table.values_) v = stream.normal();
    return table;
  }

  static std::shared_ptr<const NoiseTable> build_shared(std::uint64_t fill_seed,
                                                        std::size_t length) {
    return std::make_shared<const NoiseTable>(build(fill_seed, length));
  }

  /// Test helper: wraps explicit values.
  static NoiseTable from_values(std::vector<double> values) {
    if (values.empty()) throw ConfigError("noise table length must be positive");
    NoiseTable table;
    table.values_ = std::move(values);
    return table;
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t fill_seed() const noexcept { return fill_seed_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const double> slice(std::size_t index, std::size_t dim) const {
    if (dim > values_.size() || index > values_.size() - dim) {
      throw ConfigError("noise slice [" + std::to_string(index) + ", " +
                        std::to_string(index + dim) + ") exceeds table length " +
                        std::to_string(values_.size()));
    }
    return std::span<const double>(values_).subspan(index, dim);
  }

 private:
  NoiseTable() = default;

  std::vector<double> values_;
  std::uint64_t fill_seed_ = 0;
};

/// Uniform start index i with i + dim <= table length. Advances `stream`.
inline std::size_t draw_direction_index(Stream& stream, std::size_t dim, const NoiseTable& table) {
  if (dim == 0) throw ConfigError("perturbation dimension must be positive");
  if (dim > table.size()) {
    throw ConfigError("perturbation dimension " + std::to_string(dim) +
                      " exceeds noise table length " + std::to_string(table.size()));
  }
  return static_cast<std::size_t>(stream.uniform_below(table.size() - dim + 1));
}

/// p x n perturbation filled row-major from the slice starting at `index`.
inline Matrix slice_perturbation(const NoiseTable& table, std::size_t index, Eigen::Index rows,
                                 Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw ConfigError("perturbation shape must be positive");
  const auto values = table.slice(index, static_cast<std::size_t>(rows * cols));
  Matrix delta(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) delta(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  return delta;
}

}  // namespace ars
