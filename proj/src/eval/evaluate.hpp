#pragma once

#include <string>

#include "eval/metrics.hpp"
#include "model/asp.hpp"

namespace ap::eval {

struct EvalReport {
  std::string split;
  int segments = 1;
  size_t snippet_count = 0;

  // both mode-selection conventions, labeled
  double mae_highest = 0, mse_highest = 0, fde_highest = 0;
  double mae_best = 0, mse_best = 0, fde_best = 0;

  size_t feasibility_checked = 0;
  size_t feasibility_failed = 0;  // kinematic mappings must keep this at zero
  double prob_sum_max_dev = 0;    // max |sum softmax - 1| seen

  std::string config_hash;
  std::string dataset_fingerprint;

  std::string to_json() const;  // deterministic bytes
};

// Chains a two-segment result into full-horizon trajectories (one per final
// mode; the fed mode supplies the first segment).
std::vector<Trajectory> chained_trajectories(const model::InferResult& res);
std::vector<double> chained_probs(const model::InferResult& res);

// Runs inference over the split and aggregates metrics plus the feasibility
// re-derivation check.
EvalReport evaluate_model(const model::AspModel& m, const model::PreparedDataset& ds,
                          const data::SnippetCache& cache, const std::string& split,
                          int segments, bool use_encoded_future = false);

// ground-truth trajectory for a snippet in its ego frame (tau1 [+tau2])
Trajectory ground_truth_of(const model::PreparedDataset& ds, size_t index, int segments);

struct QuickMetrics {
  double mae = 0, mse = 0, fde = 0;
};
// highest-probability-mode metrics only; used by the training loop's epoch log
QuickMetrics quick_metrics(const model::AspModel& m, const model::PreparedDataset& ds,
                           const std::vector<size_t>& indices, int segments);

}  // namespace ap::eval
