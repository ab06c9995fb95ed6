#pragma once

#include <array>
#include <vector>

#include "core/error.hpp"

namespace ap::eval {

using Trajectory = std::vector<std::array<double, 2>>;

// mean L1 distance across time-steps: mean over steps of |dx| + |dy|
double mae(const Trajectory& pred, const Trajectory& gt);
// mean squared Euclidean distance across time-steps (meters^2)
double mse(const Trajectory& pred, const Trajectory& gt);
// Euclidean distance at the final step
double fde(const Trajectory& pred, const Trajectory& gt);

struct MetricAccumulator {
  double mae_sum = 0, mse_sum = 0, fde_sum = 0;
  size_t count = 0;

  void add(double mae_v, double mse_v, double fde_v) {
    mae_sum += mae_v;
    mse_sum += mse_v;
    fde_sum += fde_v;
    ++count;
  }
  double mae() const { return count ? mae_sum / static_cast<double>(count) : 0.0; }
  double mse() const { return count ? mse_sum / static_cast<double>(count) : 0.0; }
  double fde() const { return count ? fde_sum / static_cast<double>(count) : 0.0; }
};

}  // namespace ap::eval
