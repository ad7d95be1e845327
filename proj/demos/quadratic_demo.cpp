// Trains ARS V1 on the quadratic toy and prints the learning curve.

#include <cstdio>

#include "ars/ars.hpp"

int main() {
  using namespace ars;
  const auto env = make_quadratic_env(2, 2);
  const ArsConfig cfg{.alpha = 0.02, .num_directions = 8, .nu = 0.02, .top_b = 8,
                      .version = Version::v1, .horizon = 0, .master_seed = 1};
  TrainOptions opts;
  opts.eval_every = 20;
  opts.table_length = 100'000;
  const TrainResult result = train(cfg, *env, {.max_iterations = 200}, opts);
  for (const auto& pt : result.curve)
    std::printf("iter %4ld  episodes %6ld  eval %.6f\n", pt.iteration, pt.episodes, pt.eval_reward);
  std::printf("gain:\n");
  for (Eigen::Index r = 0; r < result.params.gain.rows(); ++r)
    std::printf("  % .4f % .4f\n", result.params.gain(r, 0), result.params.gain(r, 1));
  return 0;
}
