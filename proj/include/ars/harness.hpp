#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ars/env.hpp"
#include "ars/error.hpp"
#include "ars/lqr.hpp"
#include "ars/search.hpp"

namespace ars::harness {

using json = nlohmann::json;

/// Version of the curve JSONL fields, CSV columns and manifest layout.
inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Episodes at the first point whose eval reward is >= threshold.
inline std::optional<long> episodes_to_threshold(std::span<const CurvePoint> curve, double threshold) {
  for (const auto& pt : curve)
    if (pt.eval_reward >= threshold) return pt.episodes;
  return std::nullopt;
}

inline std::optional<long> timesteps_to_threshold(std::span<const CurvePoint> curve,
                                                  double threshold) {
  for (const auto& pt : curve)
    if (pt.eval_reward >= threshold) return pt.timesteps;
  return std::nullopt;
}

/// Max over i <= h of the seed-averaged reward R_i, where h is the first
/// index at which some seed has used at least `budget` timesteps. Curves are
/// aligned by index and truncated to the shortest one; when no seed reaches
/// the budget the whole aligned range is used.
inline double averaged_max_reward(std::span<const std::vector<CurvePoint>> curves, long budget) {
  if (curves.empty()) throw ConfigError("averaged_max_reward: no curves");
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& c : curves) len = std::min(len, c.size());
  if (len == 0) throw ConfigError("averaged_max_reward: empty curve");

  std::size_t last = len - 1;
  for (std::size_t i = 0; i < len; ++i) {
    long most = 0;
    for (const auto& c : curves) most = std::max(most, c[i].timesteps);
    if (most >= budget) {
      last = i;
      break;
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i <= last; ++i) {
    double sum = 0.0;
    for (const auto& c : curves) sum += c[i].eval_reward;
    best = std::max(best, sum / static_cast<double>(curves.size()));
  }
  return best;
}

/// Percentile q in [0, 100] with linear interpolation between closest ranks:
/// position q/100 * (n - 1) in the sorted sample.
inline double percentile(std::vector<double> values, double q) {
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile must lie in [0, 100]");
  if (values.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

inline const std::vector<double>& default_percentiles() {
  static const std::vector<double> p{2, 10, 25, 50, 75, 90, 98};
  return p;
}

struct PercentileRow {
  long iteration = 0;
  std::vector<double> values;  // one per requested percentile
};

inline std::vector<PercentileRow> percentile_report(std::span<const std::vector<CurvePoint>> curves,
                                                    std::span<const double> percentiles) {
  if (curves.size() < 2) throw ConfigError("percentile report needs at least two curves");
  for (double q : percentiles)
    if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile must lie in [0, 100]");
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& c : curves) len = std::min(len, c.size());
  std::vector<PercentileRow> rows;
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<double> sample;
    for (const auto& c : curves) sample.push_back(c[i].eval_reward);
    PercentileRow row{curves[0][i].iteration, {}};
    for (double q : percentiles) row.values.push_back(percentile(sample, q));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// LQR reporting
// ---------------------------------------------------------------------------

/// Policy gain after some number of training samples.
struct GainSnapshot {
  long episodes = 0;
  long timesteps = 0;
  Matrix gain;
};

struct LqrBudgetRow {
  long budget = 0;
  std::size_t trials = 0;
  std::size_t stable = 0;
  double frequency = 0.0;
  std::vector<double> relative_cost;  // percentiles over stable trials; empty if none
};

/// Gain in effect after at most `budget` timesteps: the last snapshot whose
/// timestep count does not exceed the budget (the zero gain if none does).
inline Matrix gain_at_budget(std::span<const GainSnapshot> run, long budget, Eigen::Index p,
                             Eigen::Index n) {
  Matrix K = Matrix::Zero(p, n);
  for (const auto& s : run) {
    if (s.timesteps > budget) break;
    K = s.gain;
  }
  return K;
}

inline LqrBudgetRow summarize_gains(long budget, std::span<const lqr::GainEvaluation> evals,
                                    std::span<const double> percentiles) {
  LqrBudgetRow row;
  row.budget = budget;
  row.trials = evals.size();
  std::vector<double> costs;
  for (const auto& ev : evals)
    if (ev.stable) costs.push_back(ev.relative_cost);
  row.stable = costs.size();
  row.frequency = evals.empty() ? 0.0 : static_cast<double>(row.stable) / static_cast<double>(evals.size());
  if (!costs.empty())
    for (double q : percentiles) row.relative_cost.push_back(percentile(costs, q));
  return row;
}

/// Stabilization frequency and relative-cost percentiles per budget. Unstable
/// gains are censored: counted in the frequency, excluded from the percentiles.
inline std::vector<LqrBudgetRow> lqr_report(std::span<const std::vector<GainSnapshot>> runs,
                                            std::span<const long> budgets,
                                            const lqr::GainEvaluator& truth,
                                            std::span<const double> percentiles) {
  const auto& inst = truth.instance();
  std::vector<LqrBudgetRow> rows;
  for (long budget : budgets) {
    std::vector<lqr::GainEvaluation> evals;
    for (const auto& run : runs)
      evals.push_back(truth.evaluate(gain_at_budget(run, budget, inst.action_dim(), inst.state_dim())));
    rows.push_back(summarize_gains(budget, evals, percentiles));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Sweep specification
// ---------------------------------------------------------------------------

struct HyperGrid {
  std::vector<double> alpha{0.02};
  std::vector<double> nu{0.02};
  std::vector<int> num_directions{8};
  std::vector<int> top_b{8};
  std::vector<Version> versions{Version::v1};
};

struct GridPoint {
  double alpha = 0.0;
  double nu = 0.0;
  int num_directions = 0;
  int top_b = 0;
  Version version = Version::v1;
};

/// Cartesian product in (version, alpha, nu, N, b) order, dropping
/// combinations the algorithm does not allow (b > N, or b < N without a
/// top-b version).
inline std::vector<GridPoint> enumerate_grid(const HyperGrid& grid) {
  std::vector<GridPoint> points;
  for (Version v : grid.versions)
    for (double a : grid.alpha)
      for (double nu : grid.nu)
        for (int N : grid.num_directions)
          for (int b : grid.top_b) {
            if (b > N || (!allows_top_b(v) && b != N)) continue;
            points.push_back({a, nu, N, b, v});
          }
  return points;
}

/// Hyperparameter grids for the MuJoCo locomotion tasks. The environments
/// themselves are not bundled; the grids are kept for use with external envs.
inline std::optional<HyperGrid> preset_grid(const std::string& name) {
  static const std::map<std::string, HyperGrid> presets{
      {"swimmer", {{0.01, 0.02, 0.025}, {0.03, 0.02, 0.01}, {1}, {1}, {Version::v1}}},
      {"hopper", {{0.01, 0.02, 0.025}, {0.03, 0.025, 0.02, 0.01}, {8, 16, 32}, {4, 8, 32}, {Version::v2t}}},
      {"halfcheetah", {{0.01, 0.02, 0.025}, {0.025, 0.02, 0.01}, {4, 8, 16, 32}, {2, 4, 8, 32}, {Version::v2t}}},
      {"walker", {{0.01, 0.02, 0.025, 0.03}, {0.025, 0.02, 0.01, 0.0075}, {40, 60, 80, 100}, {15, 30, 100}, {Version::v2t}}},
      {"ant", {{0.01, 0.015, 0.02, 0.025}, {0.025, 0.02, 0.01}, {20, 40, 60, 80}, {15, 20, 40, 80}, {Version::v2t}}},
      {"humanoid", {{0.01, 0.02, 0.025}, {0.01, 0.0075}, {90, 230, 270, 310, 350}, {100, 200, 360}, {Version::v2t}}},
  };
  auto it = presets.find(name);
  if (it == presets.end()) return std::nullopt;
  return it->second;
}

inline std::vector<std::string> preset_names() {
  return {"swimmer", "hopper", "halfcheetah", "walker", "ant", "humanoid"};
}

/// Seeds drawn without replacement, uniformly from [0, 1000), from a
/// sampling seed.
inline std::vector<std::uint64_t> sample_seeds(std::size_t count, std::uint64_t sampling_seed) {
  if (count == 0 || count > 1000) throw ConfigError("seed count must lie in [1, 1000]");
  Stream stream = SeedHierarchy(sampling_seed).stream(StreamLabel::sweep_seeds);
  std::vector<std::uint64_t> seeds;
  std::set<std::uint64_t> seen;
  while (seeds.size() < count) {
    const std::uint64_t s = stream.uniform_below(1000);
    if (seen.insert(s).second) seeds.push_back(s);
  }
  return seeds;
}

struct SweepSpec {
  EnvOptions env;
  HyperGrid grid;
  std::vector<std::uint64_t> seeds;
  int horizon = 0;  // 0: environment default
  StopCondition stop{.max_iterations = 100};
  int eval_every = 10;
  int eval_rollouts = kDefaultEvalRollouts;
  std::size_t table_length = kDefaultTableLength;
  std::optional<double> threshold;     // for episodes/timesteps-to-threshold
  std::optional<long> timestep_budget; // for the averaged max reward

  void validate() const {
    if (enumerate_grid(grid).empty()) throw ConfigError("sweep grid has no valid points");
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
    if (eval_every <= 0) throw ConfigError("sweeps need a positive evaluation cadence");
    stop.validate();
  }
};

// JSON ---------------------------------------------------------------------

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> json_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

inline json to_json(const SweepSpec& s) {
  json versions = json::array();
  for (Version v : s.grid.versions) versions.push_back(to_string(v));
  return json{
      {"schema_version", kSchemaVersion},
      {"env",
       {{"name", s.env.name},
        {"quadratic_state_dim", s.env.quadratic_state_dim},
        {"quadratic_action_dim", s.env.quadratic_action_dim},
        {"lqr_file", s.env.lqr_file},
        {"lqr_noise_std", optional_json(s.env.lqr_noise_std)},
        {"subtract_bonus", optional_json(s.env.subtract_bonus)}}},
      {"grid",
       {{"alpha", s.grid.alpha},
        {"nu", s.grid.nu},
        {"num_directions", s.grid.num_directions},
        {"top_b", s.grid.top_b},
        {"versions", versions}}},
      {"seeds", s.seeds},
      {"horizon", s.horizon},
      {"stop",
       {{"max_iterations", optional_json(s.stop.max_iterations)},
        {"max_episodes", optional_json(s.stop.max_episodes)},
        {"max_timesteps", optional_json(s.stop.max_timesteps)},
        {"reward_threshold", optional_json(s.stop.reward_threshold)}}},
      {"eval_every", s.eval_every},
      {"eval_rollouts", s.eval_rollouts},
      {"table_length", s.table_length},
      {"threshold", optional_json(s.threshold)},
      {"timestep_budget", optional_json(s.timestep_budget)},
  };
}

inline SweepSpec sweep_from_json(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion)
    throw ConfigError("manifest schema version mismatch");
  SweepSpec s;
  const json& e = j.at("env");
  s.env.name = e.at("name").get<std::string>();
  s.env.quadratic_state_dim = e.at("quadratic_state_dim").get<int>();
  s.env.quadratic_action_dim = e.at("quadratic_action_dim").get<int>();
  s.env.lqr_file = e.at("lqr_file").get<std::string>();
  s.env.lqr_noise_std = json_optional<double>(e, "lqr_noise_std");
  s.env.subtract_bonus = json_optional<double>(e, "subtract_bonus");
  const json& g = j.at("grid");
  s.grid.alpha = g.at("alpha").get<std::vector<double>>();
  s.grid.nu = g.at("nu").get<std::vector<double>>();
  s.grid.num_directions = g.at("num_directions").get<std::vector<int>>();
  s.grid.top_b = g.at("top_b").get<std::vector<int>>();
  s.grid.versions.clear();
  for (const auto& v : g.at("versions")) s.grid.versions.push_back(parse_version(v.get<std::string>()));
  s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  s.horizon = j.at("horizon").get<int>();
  const json& st = j.at("stop");
  s.stop.max_iterations = json_optional<long>(st, "max_iterations");
  s.stop.max_episodes = json_optional<long>(st, "max_episodes");
  s.stop.max_timesteps = json_optional<long>(st, "max_timesteps");
  s.stop.reward_threshold = json_optional<double>(st, "reward_threshold");
  s.eval_every = j.at("eval_every").get<int>();
  s.eval_rollouts = j.at("eval_rollouts").get<int>();
  s.table_length = j.at("table_length").get<std::size_t>();
  s.threshold = json_optional<double>(j, "threshold");
  s.timestep_budget = json_optional<long>(j, "timestep_budget");
  return s;
}

// Files --------------------------------------------------------------------

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string format_optional(const std::optional<T>& v) {
  if (!v) return "NA";
  if constexpr (std::is_floating_point_v<T>) return format_number(*v);
  else return std::to_string(*v);
}

inline std::string curve_to_jsonl(std::span<const CurvePoint> curve) {
  std::string out;
  for (const auto& pt : curve) {
    json rec{{"iteration", pt.iteration},
             {"episodes", pt.episodes},
             {"timesteps", pt.timesteps},
             {"eval_reward", pt.eval_reward}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<CurvePoint> curve_from_jsonl(std::istream& in) {
  std::vector<CurvePoint> curve;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    curve.push_back({rec.at("iteration").get<long>(), rec.at("episodes").get<long>(),
                     rec.at("timesteps").get<long>(), rec.at("eval_reward").get<double>()});
  }
  return curve;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

inline std::string curve_file_name(std::size_t point, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "point%03zu_seed%llu.jsonl", point, static_cast<unsigned long long>(seed));
  return buf;
}

// Summaries ----------------------------------------------------------------

struct RunMetrics {
  std::size_t point = 0;
  std::uint64_t seed = 0;
  long iterations = 0;
  long total_episodes = 0;
  long total_timesteps = 0;
  double final_eval_reward = 0.0;
  double max_eval_reward = 0.0;
  std::optional<long> episodes_to_threshold;
  std::optional<long> timesteps_to_threshold;
};

inline RunMetrics run_metrics(std::size_t point, std::uint64_t seed,
                              std::span<const CurvePoint> curve, std::optional<double> threshold) {
  if (curve.empty()) throw ConfigError("run metrics need a non-empty curve");
  RunMetrics m;
  m.point = point;
  m.seed = seed;
  m.iterations = curve.back().iteration;
  m.total_episodes = curve.back().episodes;
  m.total_timesteps = curve.back().timesteps;
  m.final_eval_reward = curve.back().eval_reward;
  m.max_eval_reward = -std::numeric_limits<double>::infinity();
  for (const auto& pt : curve) m.max_eval_reward = std::max(m.max_eval_reward, pt.eval_reward);
  if (threshold) {
    m.episodes_to_threshold = ars::harness::episodes_to_threshold(curve, *threshold);
    m.timesteps_to_threshold = ars::harness::timesteps_to_threshold(curve, *threshold);
  }
  return m;
}

inline const char* kRunsHeader =
    "schema_version,point,alpha,nu,num_directions,top_b,version,seed,iterations,total_episodes,"
    "total_timesteps,final_eval_reward,max_eval_reward,episodes_to_threshold,"
    "timesteps_to_threshold\n";

inline const char* kSummaryHeader =
    "schema_version,point,alpha,nu,num_directions,top_b,version,seeds,mean_final_eval_reward,"
    "averaged_max_reward,seeds_reaching_threshold,mean_episodes_to_threshold,"
    "mean_timesteps_to_threshold\n";

inline std::string point_columns(std::size_t index, const GridPoint& pt) {
  return std::to_string(kSchemaVersion) + "," + std::to_string(index) + "," +
         format_number(pt.alpha) + "," + format_number(pt.nu) + "," +
         std::to_string(pt.num_directions) + "," + std::to_string(pt.top_b) + "," +
         to_string(pt.version);
}

/// Runs CSV and summary CSV, computed from the curves alone.
/// `curves[point][seed_index]` follows the sweep's point and seed order.
inline std::pair<std::string, std::string> summarize(
    const SweepSpec& spec, const std::vector<std::vector<std::vector<CurvePoint>>>& curves) {
  const auto points = enumerate_grid(spec.grid);
  std::string runs = kRunsHeader;
  std::string summary = kSummaryHeader;
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const auto& per_seed = curves.at(pi);
    double final_sum = 0.0;
    std::size_t reached = 0;
    double ep_sum = 0.0, ts_sum = 0.0;
    for (std::size_t si = 0; si < spec.seeds.size(); ++si) {
      const RunMetrics m = run_metrics(pi, spec.seeds[si], per_seed.at(si), spec.threshold);
      runs += point_columns(pi, points[pi]) + "," + std::to_string(m.seed) + "," +
              std::to_string(m.iterations) + "," + std::to_string(m.total_episodes) + "," +
              std::to_string(m.total_timesteps) + "," + format_number(m.final_eval_reward) + "," +
              format_number(m.max_eval_reward) + "," + format_optional(m.episodes_to_threshold) +
              "," + format_optional(m.timesteps_to_threshold) + "\n";
      final_sum += m.final_eval_reward;
      if (m.episodes_to_threshold) {
        ++reached;
        ep_sum += static_cast<double>(*m.episodes_to_threshold);
        ts_sum += static_cast<double>(*m.timesteps_to_threshold);
      }
    }
    const double count = static_cast<double>(spec.seeds.size());
    const long budget = spec.timestep_budget.value_or(std::numeric_limits<long>::max());
    const bool all_reached = spec.threshold && reached == spec.seeds.size();
    summary += point_columns(pi, points[pi]) + "," + std::to_string(spec.seeds.size()) + "," +
               format_number(final_sum / count) + "," +
               format_number(averaged_max_reward(per_seed, budget)) + "," +
               (spec.threshold ? std::to_string(reached) : std::string("NA")) + "," +
               (all_reached ? format_number(ep_sum / count) : std::string("NA")) + "," +
               (all_reached ? format_number(ts_sum / count) : std::string("NA")) + "\n";
  }
  return {runs, summary};
}

struct ExperimentOutputs {
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> curve_files;
  std::filesystem::path runs_csv;
  std::filesystem::path summary_csv;
};

/// Runs every (grid point, seed) job and writes the manifest, one JSONL curve
/// per job, runs.csv and summary.csv under out_dir.
using JobCallback = std::function<void(std::size_t point, std::uint64_t seed, const TrainResult&)>;

inline ExperimentOutputs run_experiment(const SweepSpec& spec, const std::filesystem::path& out_dir,
                                        std::size_t workers = 1, const JobCallback& on_job = {}) {
  spec.validate();
  EnvOptions env_opts = spec.env;
  if (spec.horizon > 0) env_opts.horizon = spec.horizon;
  const auto env = make_env(env_opts);
  const auto points = enumerate_grid(spec.grid);
  for (const auto& pt : points)
    if (uses_whitening(pt.version) && !env->spec().whitening_supported)
      throw ConfigError("grid contains " + to_string(pt.version) + " which '" + spec.env.name +
                        "' does not support");

  for (const auto& pt : points)
    ArsConfig{pt.alpha, pt.num_directions, pt.nu, pt.top_b, pt.version, spec.horizon, 0}.validate();

  ExperimentOutputs out;
  out.manifest = out_dir / "manifest.json";
  write_file(out.manifest, to_json(spec).dump(2) + "\n");

  std::vector<std::vector<std::vector<CurvePoint>>> curves(points.size());
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    for (std::uint64_t seed : spec.seeds) {
      ArsConfig cfg{points[pi].alpha, points[pi].num_directions, points[pi].nu, points[pi].top_b,
                    points[pi].version, spec.horizon, seed};
      TrainOptions opts;
      opts.eval_every = spec.eval_every;
      opts.eval_rollouts = spec.eval_rollouts;
      opts.workers = workers;
      opts.table_length = spec.table_length;
      TrainResult result = train(cfg, *env, spec.stop, opts);
      const auto path = out_dir / "curves" / curve_file_name(pi, seed);
      write_file(path, curve_to_jsonl(result.curve));
      out.curve_files.push_back(path);
      if (on_job) on_job(pi, seed, result);
      curves[pi].push_back(std::move(result.curve));
    }
  }
  auto [runs, summary] = summarize(spec, curves);
  out.runs_csv = out_dir / "runs.csv";
  out.summary_csv = out_dir / "summary.csv";
  write_file(out.runs_csv, runs);
  write_file(out.summary_csv, summary);
  return out;
}

struct ReportCheck {
  SweepSpec spec;
  std::vector<std::vector<std::vector<CurvePoint>>> curves;
  std::string runs_csv;
  std::string summary_csv;
  bool runs_match = false;
  bool summary_match = false;
};

/// Recomputes both CSVs from the manifest and curve files and compares them
/// with the files on disk.
inline ReportCheck verify_report(const std::filesystem::path& out_dir) {
  ReportCheck check;
  check.spec = sweep_from_json(json::parse(read_file(out_dir / "manifest.json")));
  const auto points = enumerate_grid(check.spec.grid);
  check.curves.resize(points.size());
  for (std::size_t pi = 0; pi < points.size(); ++pi)
    for (std::uint64_t seed : check.spec.seeds) {
      std::istringstream in(read_file(out_dir / "curves" / curve_file_name(pi, seed)));
      check.curves[pi].push_back(curve_from_jsonl(in));
    }
  std::tie(check.runs_csv, check.summary_csv) = summarize(check.spec, check.curves);
  check.runs_match = check.runs_csv == read_file(out_dir / "runs.csv");
  check.summary_match = check.summary_csv == read_file(out_dir / "summary.csv");
  return check;
}

inline ExperimentOutputs replay_manifest(const std::filesystem::path& manifest,
                                         const std::filesystem::path& out_dir,
                                         std::size_t workers = 1) {
  return run_experiment(sweep_from_json(json::parse(read_file(manifest))), out_dir, workers);
}

// ---------------------------------------------------------------------------
// LQR benchmark: ARS V1 against nominal control on one instance.
// ---------------------------------------------------------------------------

/// Defaults are the best point of a small (alpha, nu, N) grid on the built-in
/// instance, tuned on seeds disjoint from the ones reported.
struct LqrBenchSpec {
  double alpha = 0.003;
  double nu = 0.01;
  int num_directions = 8;
  int horizon = kLqrDefaultHorizon;
  std::vector<std::uint64_t> seeds;
  std::vector<long> budgets;  // training timesteps
  std::size_t table_length = 1'000'000;
  int nominal_rollout_length = 10;
  std::vector<int> nominal_rollouts{1, 2, 5, 10, 20, 50, 100};
  int nominal_trials = 100;
  std::vector<double> percentiles = default_percentiles();
};

struct LqrBenchResult {
  std::vector<LqrBudgetRow> ars;
  std::vector<LqrBudgetRow> nominal;  // budget = rollouts * rollout length
  std::vector<std::vector<GainSnapshot>> runs;
};

/// ARS V1 runs, one per seed, each trained up to the largest budget.
inline std::vector<std::vector<GainSnapshot>> lqr_ars_runs(const LqrInstance& inst,
                                                           const LqrBenchSpec& spec,
                                                           std::size_t workers = 1) {
  if (spec.budgets.empty()) throw ConfigError("lqr bench: no budgets");
  const long max_budget = *std::max_element(spec.budgets.begin(), spec.budgets.end());
  const LqrEnv env(inst, "lqr", spec.horizon);
  std::vector<std::vector<GainSnapshot>> runs;
  for (std::uint64_t seed : spec.seeds) {
    ArsConfig cfg{spec.alpha, spec.num_directions, spec.nu, spec.num_directions, Version::v1,
                  spec.horizon, seed};
    std::vector<GainSnapshot> snaps;
    TrainOptions opts;
    opts.eval_every = 0;
    opts.workers = workers;
    opts.table_length = spec.table_length;
    opts.observer = [&](const IterationRecord& rec, const PolicyParams& params) {
      snaps.push_back({rec.episodes_so_far, rec.timesteps_so_far, params.gain});
    };
    // Stop once another iteration would overshoot the largest budget.
    const long per_iteration = 2L * spec.num_directions * spec.horizon;
    StopCondition stop{.max_timesteps = std::max(0L, max_budget - per_iteration + 1)};
    train(cfg, env, stop, opts);
    runs.push_back(std::move(snaps));
  }
  return runs;
}

inline std::vector<LqrBudgetRow> lqr_nominal_rows(const lqr::GainEvaluator& truth,
                                                  const LqrBenchSpec& spec, std::uint64_t seed) {
  std::vector<LqrBudgetRow> rows;
  for (int rollouts : spec.nominal_rollouts) {
    std::vector<lqr::GainEvaluation> evals;
    for (int trial = 0; trial < spec.nominal_trials; ++trial) {
      const auto data = lqr::collect_identification_data(
          truth.instance(), rollouts, spec.nominal_rollout_length,
          SeedHierarchy(seed).seed(StreamLabel::env_instance, static_cast<std::uint64_t>(rollouts),
                                   static_cast<std::uint64_t>(trial), 99));
      try {
        evals.push_back(lqr::nominal_synthesis(data, truth));
      } catch (const SingularEstimate&) {
        lqr::GainEvaluation failed;
        failed.K = Matrix::Zero(truth.instance().action_dim(), truth.instance().state_dim());
        evals.push_back(failed);
      }
    }
    rows.push_back(summarize_gains(static_cast<long>(rollouts) * spec.nominal_rollout_length, evals,
                                   spec.percentiles));
  }
  return rows;
}

inline LqrBenchResult run_lqr_bench(const LqrInstance& inst, const LqrBenchSpec& spec,
                                    std::uint64_t nominal_seed = 0, std::size_t workers = 1) {
  const lqr::GainEvaluator truth(inst);
  LqrBenchResult result;
  result.runs = lqr_ars_runs(inst, spec, workers);
  result.ars = lqr_report(result.runs, spec.budgets, truth, spec.percentiles);
  result.nominal = lqr_nominal_rows(truth, spec, nominal_seed);
  return result;
}

inline std::string lqr_rows_csv(std::span<const LqrBudgetRow> rows, std::span<const double> percentiles,
                                const char* budget_column) {
  std::string out = std::string("schema_version,") + budget_column + ",trials,stable,frequency";
  for (double q : percentiles) out += ",rel_cost_p" + format_number(q);
  out += "\n";
  for (const auto& row : rows) {
    out += std::to_string(kSchemaVersion) + "," + std::to_string(row.budget) + "," +
           std::to_string(row.trials) + "," + std::to_string(row.stable) + "," +
           format_number(row.frequency);
    for (std::size_t i = 0; i < percentiles.size(); ++i)
      out += "," + (row.relative_cost.empty() ? std::string("censored")
                                               : format_number(row.relative_cost[i]));
    out += "\n";
  }
  return out;
}

}  // namespace ars::harness
