#pragma once

#include <string>

#include "data/cache.hpp"
#include "model/asp.hpp"

namespace ap::model {

struct TrainOutput {
  std::string checkpoint_path;  // final weights
  std::string metrics_path;     // line-delimited json epoch log
  size_t steps = 0;             // optimizer steps taken
  double train_fde = 0;         // highest-prob FDE over the logged train subset, last epoch
  RunConfig effective_config;   // includes the fitted action scaling
};

// Adam training with plateau-based learning-rate reduction, optional
// forward-model pre-training (reconstruction + feature terms only), per-epoch
// checkpoints, and a deterministic metrics log. Aborts with a diagnostic dump
// on a non-finite loss.
TrainOutput train(const RunConfig& cfg, const data::SnippetCache& cache,
                  const std::string& out_dir);

}  // namespace ap::model
