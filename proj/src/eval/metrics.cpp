#include "eval/metrics.hpp"

#include <cmath>

namespace ap::eval {

namespace {
void check_lengths(const Trajectory& pred, const Trajectory& gt, const char* what) {
  if (pred.size() != gt.size() || pred.empty())
    raise(ErrorKind::Contract, std::string(what) + ": trajectory length mismatch");
}
}  // namespace

double mae(const Trajectory& pred, const Trajectory& gt) {
  check_lengths(pred, gt, "mae");
  double acc = 0;
  for (size_t t = 0; t < pred.size(); ++t)
    acc += std::fabs(pred[t][0] - gt[t][0]) + std::fabs(pred[t][1] - gt[t][1]);
  return acc / static_cast<double>(pred.size());
}

double mse(const Trajectory& pred, const Trajectory& gt) {
  check_lengths(pred, gt, "mse");
  double acc = 0;
  for (size_t t = 0; t < pred.size(); ++t) {
    double dx = pred[t][0] - gt[t][0];
    double dy = pred[t][1] - gt[t][1];
    acc += dx * dx + dy * dy;
  }
  return acc / static_cast<double>(pred.size());
}

double fde(const Trajectory& pred, const Trajectory& gt) {
  check_lengths(pred, gt, "fde");
  return std::hypot(pred.back()[0] - gt.back()[0], pred.back()[1] - gt.back()[1]);
}

}  // namespace ap::eval
