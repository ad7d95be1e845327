#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ars/env.hpp"
#include "ars/error.hpp"
#include "ars/policy.hpp"
#include "ars/rng.hpp"

namespace ars {

/// One rollout request. Environment randomness comes only from rollout_seed.
struct WorkItem {
  std::uint64_t iteration = 0;
  std::uint64_t direction = 0;
  std::size_t table_index = 0;
  int sign = 0;  // +1 / -1 for training, 0 for the unperturbed policy
  std::uint64_t rollout_seed = 0;
};

enum class EnvRole { training, evaluation };

struct BatchRequest {
  const PolicyParams* params = nullptr;
  double nu = 0.0;
  int horizon = 1;
  bool collect_states = false;
  EnvRole role = EnvRole::training;
};

struct BatchResult {
  std::vector<RolloutResult> rollouts;  // indexed by item ordinal
  RunningStat states;                   // per-item statistics merged in ordinal order
};

/// Fixed set of long-lived workers, each with private environment instances.
/// Item i always runs on worker i % W, and results are reduced by ordinal,
/// so outputs do not depend on W or on thread timing.
class WorkerPool {
 public:
  WorkerPool(const Environment& prototype, std::shared_ptr<const NoiseTable> table,
             std::size_t workers)
      : table_(std::move(table)) {
    if (!table_) throw ConfigError("worker pool needs a noise table");
    if (workers == 0) workers = default_worker_count();
    slots_.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      slots_.push_back(Slot{prototype.clone(), prototype.evaluation_env().clone()});
    for (std::size_t w = 1; w < workers; ++w) threads_.emplace_back([this, w] { worker_loop(w); });
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      shutdown_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  static std::size_t default_worker_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
  }

  std::size_t workers() const noexcept { return slots_.size(); }
  const NoiseTable& table() const noexcept { return *table_; }
  std::shared_ptr<const NoiseTable> shared_table() const noexcept { return table_; }
  EnvSpec spec() const { return slots_.front().train->spec(); }

  BatchResult evaluate_batch(std::span<const WorkItem> items, const BatchRequest& request) {
    if (request.params == nullptr) throw ContractViolation("evaluate_batch: missing policy");
    const std::size_t count = items.size();
    std::vector<Outcome> outcomes(count);
    if (count > 0) {
      if (threads_.empty()) {
        run_share(0, items, request, outcomes);
      } else {
        {
          std::lock_guard lock(mutex_);
          job_ = Job{items, &request, &outcomes};
          pending_ = threads_.size();
          ++generation_;
        }
        wake_.notify_all();
        run_share(0, items, request, outcomes);
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return pending_ == 0; });
        job_.reset();
      }
    }

    BatchResult result;
    result.rollouts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (outcomes[i].error) {
        try {
          std::rethrow_exception(outcomes[i].error);
        } catch (const std::exception& e) {
          throw BatchError(i, e.what());
        } catch (...) {
          throw BatchError(i, "unknown failure");
        }
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      result.rollouts.push_back(std::move(outcomes[i].rollout));
      if (request.collect_states) result.states.merge(outcomes[i].states);
    }
    return result;
  }

 private:
  struct Slot {
    std::unique_ptr<Environment> train;
    std::unique_ptr<Environment> eval;
  };

  struct Outcome {
    RolloutResult rollout;
    RunningStat states;
    std::exception_ptr error;
  };

  struct Job {
    std::span<const WorkItem> items;
    const BatchRequest* request;
    std::vector<Outcome>* outcomes;
  };

  void run_share(std::size_t worker, std::span<const WorkItem> items, const BatchRequest& request,
                 std::vector<Outcome>& outcomes) {
    Slot& slot = slots_[worker];
    Environment& env = request.role == EnvRole::training ? *slot.train : *slot.eval;
    const PolicyParams& params = *request.params;
    for (std::size_t i = worker; i < items.size(); i += slots_.size()) {
      try {
        const WorkItem& item = items[i];
        std::optional<Matrix> delta;
        if (item.sign != 0)
          delta = slice_perturbation(*table_, item.table_index, params.action_dim(),
                                     params.state_dim());
        const LinearPolicy policy(params, delta ? &*delta : nullptr, item.sign, request.nu);
        RunningStat* visited = request.collect_states ? &outcomes[i].states : nullptr;
        outcomes[i].rollout =
            rollout(env, policy, item.rollout_seed, request.horizon, false, visited);
      } catch (...) {
        outcomes[i].error = std::current_exception();
      }
    }
  }

  void worker_loop(std::size_t worker) {
    std::uint64_t seen = 0;
    for (;;) {
      Job job;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return shutdown_ || generation_ != seen; });
        if (shutdown_) return;
        seen = generation_;
        job = *job_;
      }
      run_share(worker, job.items, *job.request, *job.outcomes);
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_one();
      }
    }
  }

  std::shared_ptr<const NoiseTable> table_;
  std::vector<Slot> slots_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::optional<Job> job_;
  std::size_t pending_ = 0;
  std::uint64_t generation_ = 0;
  bool shutdown_ = false;
};

}  // namespace ars
