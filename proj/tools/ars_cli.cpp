// Command-line front end: train, sweep, lqr-bench, report, replay.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ars/ars.hpp"

namespace fs = std::filesystem;
using namespace ars;
using nlohmann::json;

namespace {

struct RunFlags {
  std::string env = "quadratic";
  std::string lqr_file;
  int quadratic_state_dim = 2;
  int quadratic_action_dim = 2;
  double subtract_bonus = -1.0;  // <0: env default
  int horizon = 0;
  long max_iterations = -1;
  long max_episodes = -1;
  long max_timesteps = -1;
  double reward_threshold = std::numeric_limits<double>::quiet_NaN();
  double threshold = std::numeric_limits<double>::quiet_NaN();
  long timestep_budget = -1;
  int eval_every = 10;
  int eval_rollouts = kDefaultEvalRollouts;
  std::size_t workers = 0;
  std::size_t table_size = kDefaultTableLength;
  std::string out_dir = "ars_out";
};

void add_run_flags(CLI::App& app, RunFlags& f) {
  app.add_option("--env", f.env, "Environment: quadratic, point-mass, lqr-tridiag, lqr-file")
      ->capture_default_str();
  app.add_option("--lqr-file", f.lqr_file, "LQR instance file (with --env lqr-file)");
  app.add_option("--quadratic-n", f.quadratic_state_dim, "Quadratic env state dimension")
      ->capture_default_str();
  app.add_option("--quadratic-p", f.quadratic_action_dim, "Quadratic env action dimension")
      ->capture_default_str();
  app.add_option("--subtract-bonus", f.subtract_bonus,
                 "Per-step bonus removed from training rewards (point-mass default: 1)");
  app.add_option("--horizon", f.horizon, "Rollout horizon (0: env default)")->capture_default_str();
  app.add_option("--max-iterations", f.max_iterations, "Stop after this many iterations");
  app.add_option("--max-episodes", f.max_episodes, "Stop after this many training episodes");
  app.add_option("--max-timesteps", f.max_timesteps, "Stop after this many training timesteps");
  app.add_option("--reward-threshold", f.reward_threshold, "Stop once eval reward reaches this");
  app.add_option("--threshold", f.threshold, "Threshold for episodes/timesteps-to-threshold metrics");
  app.add_option("--timestep-budget", f.timestep_budget, "Budget for the averaged max reward");
  app.add_option("--eval-every", f.eval_every, "Iterations between evaluations")->capture_default_str();
  app.add_option("--eval-rollouts", f.eval_rollouts, "Rollouts per evaluation")->capture_default_str();
  app.add_option("--workers", f.workers, "Worker threads (0: hardware concurrency)");
  app.add_option("--table-size", f.table_size, "Noise table length")->capture_default_str();
  app.add_option("--out-dir", f.out_dir, "Output directory")->capture_default_str();
}

harness::SweepSpec sweep_base(const RunFlags& f) {
  harness::SweepSpec spec;
  spec.env.name = f.env;
  spec.env.lqr_file = f.lqr_file;
  spec.env.quadratic_state_dim = f.quadratic_state_dim;
  spec.env.quadratic_action_dim = f.quadratic_action_dim;
  if (f.subtract_bonus >= 0.0) spec.env.subtract_bonus = f.subtract_bonus;
  else if (f.env == "point-mass") spec.env.subtract_bonus = PointMassConfig{}.survival_bonus;
  spec.horizon = f.horizon;
  spec.stop = {};
  if (f.max_iterations >= 0) spec.stop.max_iterations = f.max_iterations;
  if (f.max_episodes >= 0) spec.stop.max_episodes = f.max_episodes;
  if (f.max_timesteps >= 0) spec.stop.max_timesteps = f.max_timesteps;
  if (!std::isnan(f.reward_threshold)) spec.stop.reward_threshold = f.reward_threshold;
  if (!spec.stop.max_iterations && !spec.stop.max_episodes && !spec.stop.max_timesteps &&
      !spec.stop.reward_threshold)
    spec.stop.max_iterations = 100;
  if (!std::isnan(f.threshold)) spec.threshold = f.threshold;
  if (f.timestep_budget >= 0) spec.timestep_budget = f.timestep_budget;
  spec.eval_every = f.eval_every;
  spec.eval_rollouts = f.eval_rollouts;
  spec.table_length = f.table_size;
  return spec;
}

json record_json(const IterationRecord& r) {
  json rewards = json::array();
  for (const auto& [plus, minus] : r.rewards) rewards.push_back({plus, minus});
  return json{{"iteration", r.iteration},
              {"direction_indices", r.direction_indices},
              {"rewards", rewards},
              {"selected", r.selected},
              {"sigma_r", r.sigma_r},
              {"update_skipped", r.update_skipped},
              {"episodes_so_far", r.episodes_so_far},
              {"timesteps_so_far", r.timesteps_so_far},
              {"eval_reward", r.eval_reward ? json(*r.eval_reward) : json(nullptr)}};
}

void print_summary(const fs::path& dir) {
  std::cout << harness::read_file(dir / "summary.csv");
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::istringstream is(item);
    T v{};
    if (!(is >> v)) throw ConfigError("cannot parse list item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random search for linear policies (BRS / ARS V1, V1t, V2, V2t)"};
  app.require_subcommand(1);

  // train ------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Single training run");
  RunFlags train_flags;
  add_run_flags(*train_cmd, train_flags);
  double alpha = 0.02, nu = 0.02;
  int directions = 8, top_b = 0;
  std::string version = "V1";
  std::uint64_t seed = 0;
  train_cmd->add_option("--alpha", alpha, "Step size")->capture_default_str();
  train_cmd->add_option("--nu", nu, "Exploration noise")->capture_default_str();
  train_cmd->add_option("--directions,-N", directions, "Directions per iteration")->capture_default_str();
  train_cmd->add_option("--top-b,-b", top_b, "Top directions used (0: N)");
  train_cmd->add_option("--version", version, "V1, V1t, V2 or V2t")->capture_default_str();
  train_cmd->add_option("--seed", seed, "Master seed")->capture_default_str();

  // sweep ------------------------------------------------------------------
  auto* sweep_cmd = app.add_subcommand("sweep", "Hyperparameter grid x seeds");
  RunFlags sweep_flags;
  add_run_flags(*sweep_cmd, sweep_flags);
  std::string preset, alphas = "0.02", nus = "0.02", dirs = "8", bs, versions = "V1", seeds_text;
  std::size_t num_seeds = 3;
  std::uint64_t seed_sampler = 0;
  sweep_cmd->add_option("--preset", preset, "Named grid: swimmer, hopper, halfcheetah, walker, ant, humanoid");
  sweep_cmd->add_option("--alpha", alphas, "Comma-separated step sizes")->capture_default_str();
  sweep_cmd->add_option("--nu", nus, "Comma-separated noise scales")->capture_default_str();
  sweep_cmd->add_option("--directions", dirs, "Comma-separated N values")->capture_default_str();
  sweep_cmd->add_option("--top-b", bs, "Comma-separated b values (default: same as N)");
  sweep_cmd->add_option("--versions", versions, "Comma-separated versions")->capture_default_str();
  sweep_cmd->add_option("--seeds", seeds_text, "Comma-separated master seeds");
  sweep_cmd->add_option("--num-seeds", num_seeds, "Seeds sampled from [0, 1000) when --seeds is absent")
      ->capture_default_str();
  sweep_cmd->add_option("--seed-sampler", seed_sampler, "Seed for sampling the seed list")
      ->capture_default_str();

  // lqr-bench --------------------------------------------------------------
  auto* lqr_cmd = app.add_subcommand("lqr-bench", "ARS vs nominal control on an LQR instance");
  harness::LqrBenchSpec bench;
  std::string lqr_file, budgets = "20000,50000,100000,200000", nominal_rollouts;
  std::size_t lqr_seeds = 20, lqr_workers = 0;
  std::string lqr_out = "lqr_out";
  lqr_cmd->add_option("--lqr-file", lqr_file, "Instance file (default: built-in 3-state instance)");
  lqr_cmd->add_option("--alpha", bench.alpha, "Step size")->capture_default_str();
  lqr_cmd->add_option("--nu", bench.nu, "Exploration noise")->capture_default_str();
  lqr_cmd->add_option("--directions", bench.num_directions, "Directions per iteration")->capture_default_str();
  lqr_cmd->add_option("--horizon", bench.horizon, "Rollout horizon")->capture_default_str();
  lqr_cmd->add_option("--seeds", lqr_seeds, "Number of ARS trials (seeds 0..n-1)")->capture_default_str();
  lqr_cmd->add_option("--budgets", budgets, "Comma-separated timestep budgets")->capture_default_str();
  lqr_cmd->add_option("--nominal-rollouts", nominal_rollouts, "Comma-separated rollout counts");
  lqr_cmd->add_option("--nominal-length", bench.nominal_rollout_length, "Identification rollout length")
      ->capture_default_str();
  lqr_cmd->add_option("--nominal-trials", bench.nominal_trials, "Nominal trials per budget")
      ->capture_default_str();
  lqr_cmd->add_option("--table-size", bench.table_length, "Noise table length")->capture_default_str();
  lqr_cmd->add_option("--workers", lqr_workers, "Worker threads (0: hardware concurrency)");
  lqr_cmd->add_option("--out-dir", lqr_out, "Output directory")->capture_default_str();

  // report / replay --------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Recompute and verify metrics from curve files");
  std::string report_dir;
  report_cmd->add_option("--out-dir", report_dir, "Sweep output directory")->required();

  auto* replay_cmd = app.add_subcommand("replay", "Re-run a manifest");
  std::string manifest_path, replay_out;
  std::size_t replay_workers = 0;
  replay_cmd->add_option("--manifest", manifest_path, "manifest.json to replay")->required();
  replay_cmd->add_option("--out-dir", replay_out, "Output directory")->required();
  replay_cmd->add_option("--workers", replay_workers, "Worker threads (0: hardware concurrency)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      harness::SweepSpec spec = sweep_base(train_flags);
      const Version v = parse_version(version);
      spec.grid = {{alpha}, {nu}, {directions}, {top_b > 0 ? top_b : directions}, {v}};
      spec.seeds = {seed};
      const fs::path dir = train_flags.out_dir;
      harness::run_experiment(spec, dir, train_flags.workers,
                              [&](std::size_t, std::uint64_t, const TrainResult& result) {
                                std::string records;
                                for (const auto& r : result.records) records += record_json(r).dump() + "\n";
                                harness::write_file(dir / "records.jsonl", records);
                                std::ostringstream ckpt;
                                save_checkpoint(ckpt, result.params);
                                harness::write_file(dir / "policy.txt", ckpt.str());
                              });
      print_summary(dir);
    } else if (sweep_cmd->parsed()) {
      harness::SweepSpec spec = sweep_base(sweep_flags);
      if (!preset.empty()) {
        auto grid = harness::preset_grid(preset);
        if (!grid) throw ConfigError("unknown preset '" + preset + "'");
        spec.grid = *grid;
      } else {
        spec.grid.alpha = parse_list<double>(alphas);
        spec.grid.nu = parse_list<double>(nus);
        spec.grid.num_directions = parse_list<int>(dirs);
        spec.grid.top_b = bs.empty() ? spec.grid.num_directions : parse_list<int>(bs);
        spec.grid.versions.clear();
        for (const auto& name : parse_list<std::string>(versions))
          spec.grid.versions.push_back(parse_version(name));
      }
      spec.seeds = seeds_text.empty() ? harness::sample_seeds(num_seeds, seed_sampler)
                                      : parse_list<std::uint64_t>(seeds_text);
      const auto points = harness::enumerate_grid(spec.grid);
      std::cerr << points.size() << " grid points x " << spec.seeds.size() << " seeds\n";
      harness::run_experiment(spec, sweep_flags.out_dir, sweep_flags.workers);
      print_summary(sweep_flags.out_dir);
    } else if (lqr_cmd->parsed()) {
      const LqrInstance inst = lqr_file.empty() ? make_lqr_tridiag_instance() : load_lqr_instance(lqr_file);
      bench.budgets = parse_list<long>(budgets);
      if (!nominal_rollouts.empty()) bench.nominal_rollouts = parse_list<int>(nominal_rollouts);
      for (std::size_t s = 0; s < lqr_seeds; ++s) bench.seeds.push_back(s);
      const auto result = harness::run_lqr_bench(inst, bench, 0, lqr_workers);
      const fs::path dir = lqr_out;
      const std::string ars_csv = harness::lqr_rows_csv(result.ars, bench.percentiles, "timesteps");
      const std::string nominal_csv = harness::lqr_rows_csv(result.nominal, bench.percentiles, "timesteps");
      harness::write_file(dir / "lqr_ars.csv", ars_csv);
      harness::write_file(dir / "lqr_nominal.csv", nominal_csv);
      std::cout << "# ARS V1\n" << ars_csv << "# nominal\n" << nominal_csv;
    } else if (report_cmd->parsed()) {
      const auto check = harness::verify_report(report_dir);
      std::cout << check.summary_csv;
      for (std::size_t pi = 0; pi < check.curves.size(); ++pi) {
        if (check.curves[pi].size() < 2) continue;
        const auto rows = harness::percentile_report(check.curves[pi], harness::default_percentiles());
        std::string csv = "iteration";
        for (double q : harness::default_percentiles()) csv += ",p" + harness::format_number(q);
        csv += "\n";
        for (const auto& row : rows) {
          csv += std::to_string(row.iteration);
          for (double v : row.values) csv += "," + harness::format_number(v);
          csv += "\n";
        }
        char name[64];
        std::snprintf(name, sizeof name, "percentiles_point%03zu.csv", pi);
        harness::write_file(fs::path(report_dir) / name, csv);
      }
      std::cout << "runs.csv " << (check.runs_match ? "verified" : "MISMATCH") << "\n"
                << "summary.csv " << (check.summary_match ? "verified" : "MISMATCH") << "\n";
      return check.runs_match && check.summary_match ? 0 : 3;
    } else if (replay_cmd->parsed()) {
      harness::replay_manifest(manifest_path, replay_out, replay_workers);
      print_summary(replay_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
