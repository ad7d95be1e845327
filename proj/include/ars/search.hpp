#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ars/env.hpp"
#include "ars/error.hpp"
#include "ars/executor.hpp"
#include "ars/linalg.hpp"
#include "ars/policy.hpp"
#include "ars/rng.hpp"

namespace ars {

/// Below this reward spread the update is skipped for the iteration.
inline constexpr double kMinRewardStd = 1e-12;

struct ArsConfig {
  double alpha = 0.02;     // step size
  int num_directions = 8;  // N
  double nu = 0.02;        // exploration noise scale
  int top_b = 8;           // directions kept for the update
  Version version = Version::v1;
  int horizon = 0;  // 0: environment default
  std::uint64_t master_seed = 0;

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ConfigError("nu must be positive");
    if (num_directions < 1) throw ConfigError("number of directions must be positive");
    if (top_b < 1 || top_b > num_directions)
      throw ConfigError("top_b must lie in [1, number of directions]");
    if (!allows_top_b(version) && top_b != num_directions)
      throw ConfigError("top_b < N is only allowed for V1t and V2t");
    if (horizon < 0) throw ConfigError("horizon must be nonnegative (0 selects the env default)");
  }
};

struct IterationRecord {
  long iteration = 0;
  std::vector<std::size_t> direction_indices;
  std::vector<std::pair<double, double>> rewards;  // (r+, r-) per direction
  std::vector<std::size_t> selected;               // top-b direction ordinals, best first
  double sigma_r = 0.0;
  bool update_skipped = false;
  long episodes_so_far = 0;
  long timesteps_so_far = 0;
  std::optional<double> eval_reward;

  friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

/// Ordinals of the b best directions by max(r+, r-), ties broken by the
/// smaller ordinal.
inline std::vector<std::size_t> select_top_directions(
    std::span<const std::pair<double, double>> rewards, std::size_t b) {
  std::vector<std::size_t> order(rewards.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::max(rewards[i].first, rewards[i].second) >
           std::max(rewards[j].first, rewards[j].second);
  });
  order.resize(std::min(b, order.size()));
  return order;
}

/// Population standard deviation of the 2b rewards of the selected directions.
inline double selected_reward_std(std::span<const std::pair<double, double>> rewards,
                                  std::span<const std::size_t> selected) {
  if (selected.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k : selected) sum += rewards[k].first + rewards[k].second;
  const double mean = sum / static_cast<double>(2 * selected.size());
  double sq = 0.0;
  for (std::size_t k : selected) {
    const double a = rewards[k].first - mean;
    const double b = rewards[k].second - mean;
    sq += a * a + b * b;
  }
  return std::sqrt(sq / static_cast<double>(2 * selected.size()));
}

struct UpdateResult {
  Matrix delta_gain;
  std::vector<std::size_t> selected;
  double sigma_r = 0.0;
  bool skipped = false;
};

/// alpha / (b sigma_R) * sum over the top b of (r+ - r-) delta. There is no
/// 1/nu factor; alpha absorbs it.
inline UpdateResult compute_update(std::span<const std::pair<double, double>> rewards,
                                   std::span<const Matrix> deltas, double alpha, std::size_t b) {
  if (rewards.size() != deltas.size() || rewards.empty())
    throw ContractViolation("compute_update: need one direction per reward pair");
  UpdateResult out;
  out.selected = select_top_directions(rewards, b);
  out.sigma_r = selected_reward_std(rewards, out.selected);
  out.delta_gain = Matrix::Zero(deltas[0].rows(), deltas[0].cols());
  if (!(out.sigma_r >= kMinRewardStd) || !std::isfinite(out.sigma_r)) {
    out.skipped = true;
    return out;
  }
  for (std::size_t k : out.selected)
    out.delta_gain += (rewards[k].first - rewards[k].second) * deltas[k];
  out.delta_gain *= alpha / (static_cast<double>(out.selected.size()) * out.sigma_r);
  return out;
}

/// Rebuilds the gain update of an iteration from its record alone.
inline Matrix reconstruct_update(const IterationRecord& record, const NoiseTable& table,
                                 double alpha, Eigen::Index p, Eigen::Index n) {
  Matrix delta_gain = Matrix::Zero(p, n);
  if (record.update_skipped) return delta_gain;
  for (std::size_t k : record.selected)
    delta_gain += (record.rewards[k].first - record.rewards[k].second) *
                  slice_perturbation(table, record.direction_indices[k], p, n);
  delta_gain *= alpha / (static_cast<double>(record.selected.size()) * record.sigma_r);
  return delta_gain;
}

// ---------------------------------------------------------------------------
// Basic random search on a flat parameter vector.
// ---------------------------------------------------------------------------

struct BrsConfig {
  double alpha = 0.02;
  int num_directions = 8;
  double nu = 0.02;
};

/// theta + (alpha / N) sum_k [r(theta + nu d_k) - r(theta - nu d_k)] d_k.
/// `oracle(theta', k, sign)` returns the reward of one query.
template <class Oracle>
Vector brs_step(const Vector& theta, const BrsConfig& cfg, const NoiseTable& table, Stream& directions,
                Oracle&& oracle) {
  if (cfg.num_directions < 1 || !(cfg.nu > 0.0) || !(cfg.alpha > 0.0))
    throw ConfigError("BRS: alpha, nu and N must be positive");
  const auto dim = static_cast<std::size_t>(theta.size());
  std::vector<std::size_t> indices(static_cast<std::size_t>(cfg.num_directions));
  for (auto& idx : indices) idx = draw_direction_index(directions, dim, table);
  Vector step = Vector::Zero(theta.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto slice = table.slice(indices[k], dim);
    const Eigen::Map<const Vector> delta(slice.data(), theta.size());
    const double plus = oracle(Vector(theta + cfg.nu * delta), k, +1);
    const double minus = oracle(Vector(theta - cfg.nu * delta), k, -1);
    step += (plus - minus) * delta;
  }
  return theta + (cfg.alpha / static_cast<double>(cfg.num_directions)) * step;
}

// ---------------------------------------------------------------------------
// Augmented random search.
// ---------------------------------------------------------------------------

struct SampleCounters {
  long episodes = 0;
  long timesteps = 0;
  long eval_episodes = 0;
  long eval_timesteps = 0;
};

struct StepOutput {
  PolicyParams params;
  RunningStat stat;
  IterationRecord record;
  Matrix delta_gain;
};

inline int effective_horizon(const ArsConfig& cfg, const EnvSpec& spec) {
  return cfg.horizon > 0 ? cfg.horizon : spec.horizon;
}

/// One ARS iteration: draw N directions, run the 2N perturbed rollouts with
/// the frozen whitening statistics, update M from the top b directions and,
/// for V2/V2t, refresh (mu, Sigma) from every state visited so far.
inline StepOutput ars_step(const PolicyParams& params, const RunningStat& stat,
                           const ArsConfig& cfg, WorkerPool& pool, long iteration,
                           SampleCounters& counters) {
  const SeedHierarchy seeds(cfg.master_seed);
  const auto p = params.action_dim();
  const auto n = params.state_dim();
  const std::size_t dim = static_cast<std::size_t>(p * n);
  const auto N = static_cast<std::size_t>(cfg.num_directions);
  const auto j = static_cast<std::uint64_t>(iteration);

  Stream direction_stream = seeds.direction_stream(j);
  std::vector<std::size_t> indices(N);
  for (auto& idx : indices) idx = draw_direction_index(direction_stream, dim, pool.table());

  std::vector<WorkItem> items;
  items.reserve(2 * N);
  for (std::size_t k = 0; k < N; ++k) {
    for (int sign : {+1, -1})
      items.push_back({j, k, indices[k], sign, seeds.training_rollout_seed(j, k, sign)});
  }

  const bool whiten = uses_whitening(params.version);
  BatchRequest request{&params, cfg.nu, effective_horizon(cfg, pool.spec()), whiten,
                       EnvRole::training};
  BatchResult batch = pool.evaluate_batch(items, request);

  StepOutput out;
  out.record.iteration = iteration;
  out.record.direction_indices = indices;
  out.record.rewards.resize(N);
  for (std::size_t k = 0; k < N; ++k) {
    out.record.rewards[k] = {batch.rollouts[2 * k].total_reward,
                             batch.rollouts[2 * k + 1].total_reward};
  }
  for (const auto& r : batch.rollouts) {
    counters.episodes += 1;
    counters.timesteps += r.steps_used;
  }

  std::vector<Matrix> deltas;
  deltas.reserve(N);
  for (std::size_t idx : indices) deltas.push_back(slice_perturbation(pool.table(), idx, p, n));
  UpdateResult update =
      compute_update(out.record.rewards, deltas, cfg.alpha, static_cast<std::size_t>(cfg.top_b));

  out.record.selected = std::move(update.selected);
  out.record.sigma_r = update.sigma_r;
  out.record.update_skipped = update.skipped;
  out.record.episodes_so_far = counters.episodes;
  out.record.timesteps_so_far = counters.timesteps;

  out.params = params;
  out.params.gain += update.delta_gain;
  out.delta_gain = std::move(update.delta_gain);
  out.stat = stat;
  if (whiten) {
    out.stat.merge(batch.states);
    std::tie(out.params.mean, out.params.var_diag) = out.stat.freeze();
  }
  return out;
}

/// Mean default-reward return of the unperturbed policy over `rollouts`
/// evaluation episodes seeded from the evaluation stream.
inline double evaluate_policy(const PolicyParams& params, const ArsConfig& cfg, WorkerPool& pool,
                              long eval_point, int rollouts, SampleCounters& counters) {
  const SeedHierarchy seeds(cfg.master_seed);
  std::vector<WorkItem> items;
  items.reserve(static_cast<std::size_t>(rollouts));
  for (int e = 0; e < rollouts; ++e)
    items.push_back({static_cast<std::uint64_t>(eval_point), static_cast<std::uint64_t>(e), 0, 0,
                     seeds.evaluation_rollout_seed(static_cast<std::uint64_t>(eval_point),
                                                   static_cast<std::uint64_t>(e))});
  BatchRequest request{&params, cfg.nu, effective_horizon(cfg, pool.spec()), false,
                       EnvRole::evaluation};
  BatchResult batch = pool.evaluate_batch(items, request);
  double sum = 0.0;
  for (const auto& r : batch.rollouts) {
    sum += r.total_reward;
    counters.eval_episodes += 1;
    counters.eval_timesteps += r.steps_used;
  }
  return rollouts > 0 ? sum / static_cast<double>(rollouts) : 0.0;
}

struct StopCondition {
  std::optional<long> max_iterations;
  std::optional<long> max_episodes;
  std::optional<long> max_timesteps;
  std::optional<double> reward_threshold;

  void validate() const {
    if (!max_iterations && !max_episodes && !max_timesteps && !reward_threshold)
      throw ConfigError("stop condition: at least one limit is required");
    if ((max_iterations && *max_iterations < 0) || (max_episodes && *max_episodes < 0) ||
        (max_timesteps && *max_timesteps < 0))
      throw ConfigError("stop condition: limits must be nonnegative");
  }
};

/// A point on a learning curve: evaluation after `iteration` completed updates.
struct CurvePoint {
  long iteration = 0;
  long episodes = 0;
  long timesteps = 0;
  double eval_reward = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

inline constexpr int kDefaultEvalRollouts = 100;

struct TrainOptions {
  int eval_every = 10;  // 0 disables evaluation
  int eval_rollouts = kDefaultEvalRollouts;
  std::size_t workers = 1;  // 0: hardware concurrency
  std::size_t table_length = kDefaultTableLength;
  std::shared_ptr<const NoiseTable> table;  // built from the master seed when null
  std::function<void(const IterationRecord&, const PolicyParams&)> observer;
};

struct TrainResult {
  PolicyParams params;
  RunningStat stat;
  std::vector<IterationRecord> records;
  std::vector<CurvePoint> curve;
  SampleCounters counters;
};

inline std::shared_ptr<const NoiseTable> table_for(const ArsConfig& cfg, std::size_t length) {
  return NoiseTable::build_shared(SeedHierarchy(cfg.master_seed).noise_table_seed(), length);
}

/// Runs ARS from M = 0 until the stop condition holds. Evaluation happens
/// before the first update, after every `eval_every` updates and at the end.
inline TrainResult train(const ArsConfig& cfg, const Environment& env, const StopCondition& stop,
                         const TrainOptions& opts = {}) {
  cfg.validate();
  stop.validate();
  if (opts.eval_every < 0) throw ConfigError("eval_every must be nonnegative");
  if (opts.eval_rollouts < 1 && opts.eval_every > 0)
    throw ConfigError("eval_rollouts must be positive");
  const EnvSpec spec = env.spec();
  if (uses_whitening(cfg.version) && !spec.whitening_supported)
    throw ConfigError("state whitening (" + to_string(cfg.version) + ") is not supported on '" +
                      spec.name + "'; use V1 or V1t");

  auto table = opts.table ? opts.table : table_for(cfg, opts.table_length);
  if (static_cast<std::size_t>(spec.state_dim * spec.action_dim) > table->size())
    throw ConfigError("noise table shorter than the policy dimension");
  WorkerPool pool(env, table, opts.workers);

  TrainResult result;
  result.params = PolicyParams::zero(cfg.version, spec.action_dim, spec.state_dim);
  result.stat = RunningStat(spec.state_dim);

  const bool evaluating = opts.eval_every > 0;
  auto record_eval = [&](long completed) {
    const double r =
        evaluate_policy(result.params, cfg, pool, completed, opts.eval_rollouts, result.counters);
    result.curve.push_back(
        {completed, result.counters.episodes, result.counters.timesteps, r});
    if (!result.records.empty()) result.records.back().eval_reward = r;
    return r;
  };

  auto threshold_met = [&](double r) { return stop.reward_threshold && r >= *stop.reward_threshold; };

  long completed = 0;
  if (evaluating && threshold_met(record_eval(0))) return result;
  for (;;) {
    if (stop.max_iterations && completed >= *stop.max_iterations) break;
    if (stop.max_episodes && result.counters.episodes >= *stop.max_episodes) break;
    if (stop.max_timesteps && result.counters.timesteps >= *stop.max_timesteps) break;

    StepOutput step = ars_step(result.params, result.stat, cfg, pool, completed, result.counters);
    result.params = std::move(step.params);
    result.stat = std::move(step.stat);
    result.records.push_back(std::move(step.record));
    ++completed;
    if (evaluating && completed % opts.eval_every == 0) {
      const double r = record_eval(completed);
      if (opts.observer) opts.observer(result.records.back(), result.params);
      if (threshold_met(r)) return result;
    } else if (opts.observer) {
      opts.observer(result.records.back(), result.params);
    }
  }
  if (evaluating && (result.curve.empty() || result.curve.back().iteration != completed))
    record_eval(completed);
  return result;
}

}  // namespace ars
