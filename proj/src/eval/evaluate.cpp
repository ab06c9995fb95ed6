#include "eval/evaluate.hpp"

#include <cmath>
#include <cstdio>

namespace ap::eval {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string EvalReport::to_json() const {
  std::string s = "{\n";
  s += "  \"split\": \"" + split + "\",\n";
  s += "  \"segments\": " + std::to_string(segments) + ",\n";
  s += "  \"snippet_count\": " + std::to_string(snippet_count) + ",\n";
  s += "  \"highest_prob\": {\"mae\": " + fmt_double(mae_highest) +
       ", \"mse\": " + fmt_double(mse_highest) + ", \"fde\": " + fmt_double(fde_highest) +
       "},\n";
  s += "  \"best_of_m\": {\"mae\": " + fmt_double(mae_best) + ", \"mse\": " + fmt_double(mse_best) +
       ", \"fde\": " + fmt_double(fde_best) + "},\n";
  s += "  \"feasibility\": {\"checked\": " + std::to_string(feasibility_checked) +
       ", \"failed\": " + std::to_string(feasibility_failed) + "},\n";
  s += "  \"prob_sum_max_dev\": " + fmt_double(prob_sum_max_dev) + ",\n";
  s += "  \"config_hash\": \"" + config_hash + "\",\n";
  s += "  \"dataset_fingerprint\": \"" + dataset_fingerprint + "\"\n";
  s += "}\n";
  return s;
}

std::vector<Trajectory> chained_trajectories(const model::InferResult& res) {
  std::vector<Trajectory> out;
  if (res.segments.empty()) return out;
  const auto& seg1 = res.segments[0];
  if (res.segments.size() == 1) {
    for (const auto& mo : seg1.modes) out.push_back(mo.positions);
    return out;
  }
  const auto& fed = seg1.modes.at(res.segments[0].fed_mode).positions;
  for (const auto& mo : res.segments[1].modes) {
    Trajectory tr = fed;
    tr.insert(tr.end(), mo.positions.begin(), mo.positions.end());
    out.push_back(tr);
  }
  return out;
}

std::vector<double> chained_probs(const model::InferResult& res) {
  std::vector<double> out;
  const auto& seg = res.segments.size() == 1 ? res.segments[0] : res.segments[1];
  for (const auto& mo : seg.modes) out.push_back(mo.prob);
  return out;
}

Trajectory ground_truth_of(const model::PreparedDataset& ds, size_t index, int segments) {
  const auto& item = ds.items.at(index);
  Trajectory gt = item.gt1;
  if (segments == 2) {
    if (item.gt2.empty()) raise(ErrorKind::Config, "ground_truth_of: dataset has no tau2 window");
    gt.insert(gt.end(), item.gt2.begin(), item.gt2.end());
  }
  return gt;
}

namespace {

struct SnippetEval {
  double mae_h, mse_h, fde_h;
  double mae_b, mse_b, fde_b;
};

SnippetEval eval_one(const model::InferResult& res, const Trajectory& gt,
                     double* prob_dev_out) {
  auto trajectories = chained_trajectories(res);
  auto probs = chained_probs(res);
  if (trajectories.empty()) raise(ErrorKind::Contract, "evaluate: no modes");

  double prob_sum = 0;
  for (double p : probs) prob_sum += p;
  if (prob_dev_out) *prob_dev_out = std::fabs(prob_sum - 1.0);

  size_t best_prob = 0;
  for (size_t m = 1; m < probs.size(); ++m)
    if (probs[m] > probs[best_prob]) best_prob = m;

  SnippetEval ev{};
  ev.mae_h = mae(trajectories[best_prob], gt);
  ev.mse_h = mse(trajectories[best_prob], gt);
  ev.fde_h = fde(trajectories[best_prob], gt);
  ev.mae_b = ev.mae_h;
  ev.mse_b = ev.mse_h;
  ev.fde_b = ev.fde_h;
  for (const auto& tr : trajectories) {
    ev.mae_b = std::min(ev.mae_b, mae(tr, gt));
    ev.mse_b = std::min(ev.mse_b, mse(tr, gt));
    ev.fde_b = std::min(ev.fde_b, fde(tr, gt));
  }
  return ev;
}

}  // namespace

EvalReport evaluate_model(const model::AspModel& m, const model::PreparedDataset& ds,
                          const data::SnippetCache& cache, const std::string& split,
                          int segments, bool use_encoded_future) {
  const auto indices = cache.indices_of(split);
  EvalReport rep;
  rep.split = split;
  rep.segments = segments;
  rep.snippet_count = indices.size();
  rep.dataset_fingerprint = cache.fingerprint;
  if (indices.empty()) return rep;

  kin::ActionBounds bounds{m.config().a_min, m.config().a_max, m.config().delta_min,
                           m.config().delta_max};

  MetricAccumulator high, best;
  for (size_t idx : indices) {
    auto results = model::infer(m, ds, {idx}, segments, model::ChainPolicy::HighestProb,
                                use_encoded_future);
    const auto& res = results[0];
    double prob_dev = 0;
    SnippetEval ev = eval_one(res, ground_truth_of(ds, idx, segments), &prob_dev);
    rep.prob_sum_max_dev = std::max(rep.prob_sum_max_dev, prob_dev);
    high.add(ev.mae_h, ev.mse_h, ev.fde_h);
    best.add(ev.mae_b, ev.mse_b, ev.fde_b);

    // feasibility re-derivation on every predicted trajectory, each mode from
    // the state it was rolled from
    for (const auto& seg : res.segments) {
      for (const auto& mo : seg.modes) {
        ++rep.feasibility_checked;
        bool ok;
        if (m.config().kinematic_layer()) {
          std::vector<kin::State> chain;
          chain.push_back(mo.start);
          chain.insert(chain.end(), mo.states.begin(), mo.states.end());
          ok = kin::trajectory_feasible(chain, m.config().geometry, m.config().dt, bounds);
        } else {
          // position-only output: lift to states first
          auto chain = kin::states_from_positions(mo.start, mo.positions, m.config().dt);
          ok = kin::trajectory_feasible(chain, m.config().geometry, m.config().dt, bounds);
        }
        if (!ok) ++rep.feasibility_failed;
      }
    }
  }
  rep.mae_highest = high.mae();
  rep.mse_highest = high.mse();
  rep.fde_highest = high.fde();
  rep.mae_best = best.mae();
  rep.mse_best = best.mse();
  rep.fde_best = best.fde();
  return rep;
}

QuickMetrics quick_metrics(const model::AspModel& m, const model::PreparedDataset& ds,
                           const std::vector<size_t>& indices, int segments) {
  MetricAccumulator acc;
  for (size_t idx : indices) {
    auto results = model::infer(m, ds, {idx}, segments, model::ChainPolicy::HighestProb);
    auto trajectories = chained_trajectories(results[0]);
    auto probs = chained_probs(results[0]);
    size_t best = 0;
    for (size_t k = 1; k < probs.size(); ++k)
      if (probs[k] > probs[best]) best = k;
    Trajectory gt = ground_truth_of(ds, idx, segments);
    acc.add(mae(trajectories[best], gt), mse(trajectories[best], gt),
            fde(trajectories[best], gt));
  }
  return {acc.mae(), acc.mse(), acc.fde()};
}

}  // namespace ap::eval
